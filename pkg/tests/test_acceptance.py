"""Acceptance gates for the pipeline.

Each criterion runs as one test and prints a single PASS or FAIL line
with the measured values and, where a budget applies, the wall time.
Tolerances and time budgets are pinned in the assertions; nothing here
is tuned at run time.
"""

import os
import time
import warnings

import numpy as np

from epistate.benchmark import (
    BENCH_STATE,
    BenchmarkConfig,
    ablation_trial,
    benchmark_session,
    classifier_trial,
    sweep_trial,
)
from epistate.cli import main
from epistate.dataset import N_CHANNELS, FeatureSeries
from epistate.facefeat import landmark_header
from epistate.regions import label_regions
from epistate.regress import SvrParams, train_svr
from epistate.stats import mic, optimize_axis_partition
from epistate.temporal import WindowConfig, event_velocity, events, velocity

from oracles import brute_axis_mi, ls_line_fit
from test_facefeat import neutral_frame, row_text


def report(criterion: str, failures: list, detail: str) -> None:
    """One visible line per criterion, then the verdict."""
    verdict = "FAIL" if failures else "PASS"
    print(f"[{verdict}] {criterion}: {detail}")
    assert not failures, f"{criterion}: " + "; ".join(failures)


def test_c1_mic_dependence_suite():
    t0 = time.perf_counter()
    failures = []
    rng = np.random.default_rng(2024)
    x = rng.uniform(0.0, 1.0, 1000)
    fx = {
        "y=x": mic(x, x),
        "y=x^2": mic(x, x ** 2),
        "y=sin(4pi x)": mic(x, np.sin(4.0 * np.pi * x)),
    }
    for name, score in fx.items():
        if not score >= 0.97:
            failures.append(f"{name} scored {score:.4f} < 0.97")

    null = np.sort([mic(np.random.default_rng(s).uniform(0, 1, 1000),
                        np.random.default_rng(s + 10_000).uniform(0, 1, 1000))
                    for s in range(200)])
    p99 = float(np.percentile(null, 99))
    if not p99 <= 0.25:
        failures.append(f"null 99th percentile {p99:.4f} > 0.25")

    sym = 0.0
    for s in range(10):
        r = np.random.default_rng(300 + s)
        a = r.normal(0, 1, 400)
        b = 0.5 * a + r.normal(0, 1, 400) if s % 2 else r.normal(0, 1, 400)
        sym = max(sym, abs(mic(a, b) - mic(b, a)))
    if not sym <= 1e-12:
        failures.append(f"asymmetry {sym:.2e} > 1e-12")

    r = np.random.default_rng(77)
    a = r.normal(0, 1, 400)
    b = np.sin(3.0 * a) + 0.1 * r.normal(0, 1, 400)
    base = mic(a, b)
    exact = all(mic(f(a), g(b)) == base
                for f, g in ((np.exp, lambda v: v),
                             (lambda v: v ** 3, np.arctan),
                             (lambda v: 3.0 * v - 2.0, lambda v: np.exp(v / 4))))
    if not exact:
        failures.append("monotone-transform invariance is not exact")

    dt = time.perf_counter() - t0
    if not dt <= 60.0:
        failures.append(f"suite took {dt:.1f}s > 60s")
    report("criterion 1 (MIC suite)",
           failures,
           f"functional {min(fx.values()):.3f}>=0.97, null p99 {p99:.3f}<=0.25, "
           f"asym {sym:.1e}<=1e-12, invariance exact, {dt:.1f}s<=60s")


def test_c2_partition_optimizer_vs_brute_force():
    t0 = time.perf_counter()
    failures = []
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(4, 13))
        while True:
            x = rng.normal(0, 1, n)
            y = rng.normal(0, 1, n) + (0.8 * x if trial % 2 else 0.0)
            if np.unique(x).size == n and np.unique(y).size == n:
                break
        # grid budget 6: both admissible shapes
        for rows, max_cols in ((2, 3), (3, 2)):
            _, ivals = optimize_axis_partition(x, y, rows, max_cols)
            brute = brute_axis_mi(x, y, rows, max_cols)
            diff = float(np.max(np.abs(ivals - brute)))
            worst = max(worst, diff)
            if diff > 1e-12:
                failures.append(
                    f"trial {trial} rows={rows} cols<={max_cols}: "
                    f"|dp - brute| = {diff:.2e}")
    dt = time.perf_counter() - t0
    if not dt <= 30.0:
        failures.append(f"suite took {dt:.1f}s > 30s")
    report("criterion 2 (partition optimizer vs exhaustive search)",
           failures,
           f"50 datasets x 2 shapes, worst gap {worst:.1e}<=1e-12, "
           f"{dt:.1f}s<=30s")


def test_c3_windowed_feature_oracle():
    failures = []
    rng = np.random.default_rng(11)
    worst = 0.0
    for trial in range(20):
        n = int(rng.integers(30, 81))
        fps = float(rng.choice([25.0, 30.0, 50.0]))
        w = int(rng.integers(2, min(n, 25) + 1))
        db = float(rng.uniform(0.0, 0.3))
        data = rng.normal(0, 1, (n, N_CHANNELS))
        s = FeatureSeries(data=data, fps=fps)
        wc = WindowConfig(size=w, deadband=db)
        v, e, iv = velocity(s, wc), events(s, wc), event_velocity(s, wc)
        for t in range(n - w + 1):
            span = (w - 1) / fps
            vt = (data[t + w - 1] - data[t]) / span
            et = np.sign(vt)
            et[np.abs(vt) <= db] = 0.0
            for got, want in ((v[t], vt), (e[t], et), (iv[t], et * vt)):
                diff = float(np.max(np.abs(got - want)))
                worst = max(worst, diff)
                if diff > 1e-12:
                    failures.append(
                        f"trial {trial} window {w} row {t}: diff {diff:.2e}")
    report("criterion 3 (windowed feature recomputation)",
           failures,
           f"20 series, every window position, worst diff {worst:.1e}<=1e-12")


def test_c4_region_segmentation():
    failures = []
    smooth, tau = 20, 0.15
    exact_frames = noisy_agree = noisy_total = 0
    for seed in range(10):
        clean = benchmark_session(seed, BenchmarkConfig(trace_sigma=0.0))
        plan = clean.regions[BENCH_STATE].codes
        got = label_regions(clean.trace(BENCH_STATE), smooth=smooth,
                            tau=tau).codes
        keep = np.ones(plan.size, dtype=bool)
        for e in np.nonzero(np.diff(plan))[0] + 1:
            keep[max(0, e - smooth):e + smooth] = False
        if not np.array_equal(got[keep], plan[keep]):
            bad = int(np.sum(got[keep] != plan[keep]))
            failures.append(f"seed {seed}: {bad} noiseless frames mislabeled "
                            "outside the transition bands")
        exact_frames += int(keep.sum())

        noisy = benchmark_session(seed, BenchmarkConfig(trace_sigma=0.01))
        ngot = label_regions(noisy.trace(BENCH_STATE), smooth=smooth,
                             tau=tau).codes
        # agreement is measured on the same banded-out frames
        noisy_agree += int(np.sum(ngot[keep] == plan[keep]))
        noisy_total += int(keep.sum())
    frac = noisy_agree / noisy_total
    if not frac >= 0.95:
        failures.append(f"noisy agreement {frac:.3f} < 0.95")
    report("criterion 4 (region segmentation)",
           failures,
           f"noiseless exact on {exact_frames} banded-out frames, "
           f"sigma=0.01 agreement {frac:.3f}>=0.95 outside the bands")


def test_c5_region_classifier_auc():
    t0 = time.perf_counter()
    failures = []
    per_class = {}
    for seed in range(10):
        for region, auc in classifier_trial(seed).items():
            per_class.setdefault(region, []).append(auc)
    medians = {r: float(np.median(v)) for r, v in per_class.items()}
    for region, med in medians.items():
        if not med >= 0.90:
            failures.append(f"{region} median AUC {med:.3f} < 0.90")
    dt = time.perf_counter() - t0
    if not dt <= 300.0:
        failures.append(f"suite took {dt:.1f}s > 300s")
    report("criterion 5 (region classifier, one-vs-rest AUC)",
           failures,
           "median over 10 seeds "
           + " ".join(f"{r}={m:.3f}" for r, m in sorted(medians.items()))
           + f" (all >=0.90), {dt:.1f}s<=300s")


def test_c6_svr_suite():
    failures = []

    # dual feasibility after every run, converged or not
    worst_excess = -np.inf
    battery = [
        (1, SvrParams(C=2.0)),
        (2, SvrParams(C=0.5, kernel="linear")),
        (3, SvrParams(C=1.0, epsilon=0.0)),
        (4, SvrParams(C=10.0, epsilon=0.02)),
        (5, SvrParams(C=0.1, kernel="linear", epsilon=0.1)),
        (6, SvrParams(C=5.0, tol=1e-12, max_iter=3)),  # deliberately stalled
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for seed, params in battery:
            r = np.random.default_rng(seed)
            x = r.normal(0, 1, (60, 3))
            y = np.clip(0.4 * x[:, 0] - 0.3 * np.sin(x[:, 1]) +
                        r.normal(0, 0.1, 60), -1, 1)
            reg = train_svr(x, y, params)
            excess = float(np.max(np.abs(reg.beta)) - params.C) \
                if reg.n_support else -params.C
            worst_excess = max(worst_excess, excess)
            if excess > 1e-12:
                failures.append(f"seed {seed}: |beta| exceeds C by {excess:.2e}")

    # linear kernel against the closed-form least-squares oracle
    r = np.random.default_rng(0)
    x = r.uniform(-1, 1, (200, 1))
    y = 0.5 * x[:, 0] - 0.2
    reg = train_svr(x, y, SvrParams(C=1e4, epsilon=0.0, kernel="linear",
                                    tol=1e-8, max_iter=4000))
    a, b = ls_line_fit(x[:, 0], y)
    ls_err = float(np.max(np.abs(reg.decision_values(x) - (a * x[:, 0] + b))))
    if not ls_err <= 1e-3:
        failures.append(f"linear fit off the LS oracle by {ls_err:.2e} > 1e-3")

    # rbf on a sine, held-out error
    r = np.random.default_rng(4)
    x = r.uniform(-1, 1, (120, 1))
    y = 0.8 * np.sin(2 * np.pi * x[:, 0])
    xt = r.uniform(-0.95, 0.95, (60, 1))
    yt = 0.8 * np.sin(2 * np.pi * xt[:, 0])
    sreg = train_svr(x, y, SvrParams(C=2.0, epsilon=0.02))
    rmse = float(np.sqrt(np.mean((sreg.predict(xt) - yt) ** 2)))
    if not rmse <= 0.1:
        failures.append(f"sine held-out RMSE {rmse:.4f} > 0.1")

    report("criterion 6 (SVR suite)",
           failures,
           f"feasibility excess {worst_excess:.1e}<=1e-12 over "
           f"{len(battery)} runs, LS gap {ls_err:.1e}<=1e-3, "
           f"sine RMSE {rmse:.4f}<=0.1")


def test_c7_end_to_end_coerr():
    t0 = time.perf_counter()
    failures = []
    with_means, without_means = [], []
    for seed in range(10):
        rep = ablation_trial(seed)
        with_means.append(rep.mean)
        without_means.append(rep.without_mean)
    med_with = float(np.median(with_means))
    med_without = float(np.median(without_means))
    if not med_with >= 0.80:
        failures.append(f"median CoERR {med_with:.4f} < 0.80")
    if not med_with >= med_without:
        failures.append(f"gated {med_with:.4f} below ungated {med_without:.4f}")
    dt = time.perf_counter() - t0
    if not dt <= 600.0:
        failures.append(f"suite took {dt:.1f}s > 600s")
    report("criterion 7 (end-to-end cross-validated CoERR)",
           failures,
           f"median over 10 seeds: gated {med_with:.4f}>=0.80, "
           f"ungated {med_without:.4f}, 10-fold session-level CV, "
           f"{dt:.0f}s<=600s")


def test_c8_window_sweep_argmax():
    rep = sweep_trial(0)
    curve = " ".join(f"{w}:{m:.3f}" for w, m, _ in rep.sweep)
    failures = []
    if rep.best_window not in (20, 40, 60):
        failures.append(f"best window {rep.best_window} not in {{20, 40, 60}}")
    report("criterion 8 (window sweep on 40-frame dynamics)",
           failures,
           f"best={rep.best_window} in {{20,40,60}}; curve {curve}")


MANIFEST = """\
n_frames=200
fps=25
seed=9
state=Concentration
sigma=0.05
trace_sigma=0.02
start=-0.6
id=accept
plan=RISE:40:0.03,SUSTAIN:60,DECAY:40:-0.03,SUSTAIN:60
couple.inBrL=linear:0.6
couple.inBrR=linear:0.5:0.05
couple.eyeOL=quadratic:0.5
couple.oLipH=sinusoidal:0.4:0:0.5
couple.LpCDt=linear:0.4:0.1
couple.Yaw=linear:-0.3
"""

FAST = ["--window", "10", "--tau", "0.15", "--trees", "5",
        "--mic-points", "128"]


def _run(argv) -> None:
    code = main(argv)
    assert code == 0, f"exit {code} from: {' '.join(argv)}"


def _tree_bytes(path) -> dict:
    if os.path.isfile(path):
        # constant key: variants differ in basename by construction
        return {"file": open(path, "rb").read()}
    out = {}
    for name in sorted(os.listdir(path)):
        out[name] = open(os.path.join(path, name), "rb").read()
    return out


def test_c9_cli_determinism(tmp_path):
    failures = []
    manifest = tmp_path / "recipe.txt"
    manifest.write_text(MANIFEST)
    lm = tmp_path / "landmarks.csv"
    rows = [row_text(neutral_frame(scale=1.0 + 0.05 * i)) for i in range(4)]
    lm.write_text(landmark_header() + "\n" + "\n".join(rows) + "\n")

    sessions = []
    for i in range(4):
        out = str(tmp_path / f"sess{i}")
        _run(["synth", "--manifest", str(manifest), "--seed", str(60 + i),
              "--out", out])
        sessions.append(out)
    model = str(tmp_path / "model.txt")
    _run(["train", "--state", "Concentration", "--out", model] + FAST
         + sessions[:3])

    # identical argv twice, plus a jobs=8 variant, for every subcommand
    runs = {
        "synth": ["synth", "--manifest", str(manifest), "--seed", "61"],
        "features": ["features", "--landmarks", str(lm)],
        "mic": ["mic"] + sessions[:2],
        "pearson": ["pearson"] + sessions[:2],
        "train": ["train", "--state", "Concentration"] + FAST + sessions[:3],
        "predict": ["predict", "--model", model, "--session", sessions[3]],
        "eval": ["eval", "--state", "Concentration", "--k", "2"] + FAST
                + sessions,
        "sweep": ["sweep", "--state", "Concentration", "--k", "2",
                  "--windows", "5,10"] + FAST + sessions,
    }
    file_cmds = {"features", "train", "predict"}
    for name, argv in runs.items():
        outs = []
        for variant, jobs in (("a", 1), ("b", 1), ("c", 8)):
            ext = ".csv" if name in file_cmds else ""
            ext = ".txt" if name == "train" else ext
            out = str(tmp_path / f"{name}_{variant}{ext}")
            _run(argv + ["--out", out, "--jobs", str(jobs)])
            outs.append(_tree_bytes(out))
        if not (outs[0] == outs[1] == outs[2]):
            failures.append(f"{name}: outputs differ across reruns or jobs")
    report("criterion 9 (CLI determinism)",
           failures,
           f"{len(runs)} subcommands bit-identical across two runs "
           "and jobs 1 vs 8")
