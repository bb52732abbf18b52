"""End-to-end command-line flows, run in process via main(argv)."""

import os

import numpy as np
import pytest

from epistate.cli import OUT_ENV, main
from epistate.dataset import (
    State,
    load_annotation_trace,
    load_feature_series,
    load_session,
)
from epistate.evaluation import EvalReport
from epistate.facefeat import landmark_header
from epistate.regress import StateModel, UngatedModel, load_model

from test_facefeat import neutral_frame, row_text

MANIFEST = """\
# benchmark-like recipe
n_frames=200
fps=25
seed=9
state=Concentration
sigma=0.05
trace_sigma=0.02
start=-0.6
id=cli
plan=RISE:40:0.03,SUSTAIN:60,DECAY:40:-0.03,SUSTAIN:60
couple.inBrL=linear:0.6
couple.inBrR=linear:0.5:0.05
couple.eyeOL=quadratic:0.5
couple.oLipH=sinusoidal:0.4:0:0.5
couple.LpCDt=linear:0.4:0.1
couple.Yaw=linear:-0.3
"""

FAST = ["--window", "10", "--tau", "0.15", "--trees", "5", "--mic-points", "128"]


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)


@pytest.fixture()
def manifest(tmp_path):
    p = tmp_path / "recipe.txt"
    p.write_text(MANIFEST)
    return str(p)


def synth(tmp_path, manifest, name, seed=None):
    out = str(tmp_path / name)
    argv = ["synth", "--manifest", manifest, "--out", out]
    if seed is not None:
        argv += ["--seed", str(seed)]
    assert main(argv) == 0
    return out


@pytest.fixture()
def session_dirs(tmp_path, manifest):
    return [synth(tmp_path, manifest, f"sess{i}", seed=50 + i) for i in range(4)]


def read_manifest(path) -> dict:
    lines = open(path).read().splitlines()
    assert lines[0] == "epistate-run v1"
    out = {}
    for ln in lines[1:]:
        key, _, val = ln.partition(",")
        out.setdefault(key, []).append(val)
    return out


def test_version():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_synth_writes_session_and_manifest(tmp_path, manifest):
    out = synth(tmp_path, manifest, "one")
    sess = load_session(out)
    assert sess.n_frames == 200
    assert State.CONCENTRATION in sess.traces
    assert sess.regions  # plan labels round-trip
    man = read_manifest(os.path.join(out, "manifest.txt"))
    assert man["command"] == ["synth"]
    assert man["seed"] == ["9"]  # manifest seed is authoritative
    assert "time" not in man and "jobs" not in man
    assert {"epistate", "numpy", "python"} <= {v.split(",")[0]
                                               for v in man["version"]}


def test_synth_seed_override(tmp_path, manifest):
    base = synth(tmp_path, manifest, "base")
    over = synth(tmp_path, manifest, "over", seed=123)
    man = read_manifest(os.path.join(over, "manifest.txt"))
    assert man["seed"] == ["123"]
    a = load_session(base).features.data
    b = load_session(over).features.data
    assert not np.array_equal(a, b)


def test_synth_deterministic(tmp_path, manifest):
    a = synth(tmp_path, manifest, "detA")
    b = synth(tmp_path, manifest, "detB")
    fa = open(os.path.join(a, "features.csv")).read()
    fb = open(os.path.join(b, "features.csv")).read()
    assert fa == fb


def test_mic_and_pearson(tmp_path, session_dirs):
    out = str(tmp_path / "mic")
    assert main(["mic", "--out", out] + session_dirs[:2]) == 0
    mic_lines = open(os.path.join(out, "mic.csv")).read().splitlines()
    assert mic_lines[0].startswith("feature,")
    assert len(mic_lines) == 13  # header + 12 channels
    assert os.path.exists(os.path.join(out, "report.txt"))

    pout = str(tmp_path / "pear")
    assert main(["pearson", "--out", pout] + session_dirs[:2]) == 0
    text = open(os.path.join(pout, "report.txt")).read()
    assert text.startswith("# Pearson ranking")


def test_train_predict_round_trip(tmp_path, session_dirs):
    model_path = str(tmp_path / "model.txt")
    argv = ["train", "--state", "Concentration", "--out", model_path] + FAST
    assert main(argv + session_dirs[:3]) == 0
    model = load_model(model_path)
    assert isinstance(model, StateModel)
    # manifest lands next to the model file, echoing the flags
    man = read_manifest(str(tmp_path / "model.manifest.txt"))
    assert man["command"] == ["train"]
    assert man["window"] == ["10"]
    assert man["state"] == ["Concentration"]

    pred = str(tmp_path / "pred.csv")
    assert main(["predict", "--model", model_path,
                 "--session", session_dirs[3], "--out", pred]) == 0
    trace = load_annotation_trace(pred, "Concentration")
    assert trace.values.shape == (200,)
    assert np.all(np.abs(trace.values) <= 1.0)

    # --features path accepts a bare feature CSV
    pred2 = str(tmp_path / "pred2.csv")
    feats = os.path.join(session_dirs[3], "features.csv")
    assert main(["predict", "--model", model_path,
                 "--features", feats, "--out", pred2]) == 0
    assert open(pred2).read() == open(pred).read()


def test_train_ungated_and_jobs_identical(tmp_path, session_dirs):
    a = str(tmp_path / "a.txt")
    b = str(tmp_path / "b.txt")
    base = ["train", "--state", "Concentration", "--ungated"] + FAST
    assert main(base + ["--out", a] + session_dirs[:3]) == 0
    assert main(base + ["--out", b, "--jobs", "3"] + session_dirs[:3]) == 0
    assert isinstance(load_model(a), UngatedModel)
    assert open(a).read() == open(b).read()


def test_eval_and_ablate(tmp_path, session_dirs):
    out = str(tmp_path / "eval")
    argv = ["eval", "--state", "Concentration", "--k", "2", "--out", out] + FAST
    assert main(argv + session_dirs) == 0
    rep = EvalReport.from_text(os.path.join(out, "report.txt"))
    assert rep.k == 2 and len(rep.fold_coerr) == 2
    assert not rep.has_ablation
    folds = open(os.path.join(out, "folds.csv")).read().splitlines()
    assert folds[0] == "fold,coerr"

    aout = str(tmp_path / "ablate")
    argv = ["eval", "--state", "Concentration", "--k", "2", "--ablate",
            "--out", aout] + FAST
    assert main(argv + session_dirs) == 0
    rep = EvalReport.from_text(os.path.join(aout, "report.txt"))
    assert rep.has_ablation
    folds = open(os.path.join(aout, "folds.csv")).read().splitlines()
    assert folds[0] == "fold,coerr,coerr_without"


def test_sweep(tmp_path, session_dirs):
    out = str(tmp_path / "sweep")
    argv = ["sweep", "--state", "Concentration", "--k", "2",
            "--windows", "5,10", "--out", out] + FAST
    assert main(argv + session_dirs) == 0
    lines = open(os.path.join(out, "sweep.csv")).read().splitlines()
    assert lines[0] == "window,mean_coerr,std_coerr"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["5", "10"]
    rep = EvalReport.from_text(os.path.join(out, "report.txt"))
    assert rep.best_window in (5, 10)


def test_features_from_landmarks(tmp_path):
    lm = tmp_path / "landmarks.csv"
    rows = [row_text(neutral_frame(scale=1.0 + 0.1 * i)) for i in range(3)]
    lm.write_text(landmark_header() + "\n" + "\n".join(rows) + "\n")
    out = str(tmp_path / "features.csv")
    assert main(["features", "--landmarks", str(lm), "--out", out,
                 "--fps", "30"]) == 0
    series = load_feature_series(out, fps=30.0)
    assert series.data.shape == (3, 12)
    assert np.isfinite(series.data).all()
    assert os.path.exists(str(tmp_path / "features.manifest.txt"))


def test_out_env_fallback(tmp_path, manifest, monkeypatch):
    target = tmp_path / "envout"
    monkeypatch.setenv(OUT_ENV, str(target))
    assert main(["synth", "--manifest", manifest]) == 0
    assert (target / "features.csv").exists()


def test_missing_out_is_an_input_error(manifest, capsys):
    assert main(["synth", "--manifest", manifest]) == 2
    assert OUT_ENV in capsys.readouterr().err


def test_unknown_config_key(tmp_path, manifest, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("wibble=3\n")
    code = main(["synth", "--manifest", manifest, "--config", str(cfgfile),
                 "--out", str(tmp_path / "x")])
    assert code == 2
    assert "wibble" in capsys.readouterr().err


def test_flag_overrides_config_file(tmp_path, session_dirs):
    cfgfile = tmp_path / "model.cfg"
    cfgfile.write_text("window=10  # comment\ntau=0.15\ntrees=5\n"
                       "mic_points=128\n")
    out = str(tmp_path / "m.txt")
    argv = ["train", "--state", "Concentration", "--config", str(cfgfile),
            "--window", "12", "--out", out]
    assert main(argv + session_dirs[:2]) == 0
    man = read_manifest(str(tmp_path / "m.manifest.txt"))
    assert man["window"] == ["12"]
    assert man["tau"] == ["0.15"]
    assert load_model(out).window == 12


def test_bad_inputs_exit_2(tmp_path, session_dirs, capsys):
    assert main(["synth", "--manifest", str(tmp_path / "nope.txt"),
                 "--out", str(tmp_path / "x")]) == 2
    assert main(["eval", "--state", "Wibble", "--out", str(tmp_path / "y")]
                + session_dirs[:2]) == 2
    assert main(["train", "--state", "Concentration",
                 "--out", str(tmp_path / "z")]) == 2  # no sessions
    capsys.readouterr()


def test_predict_requires_exactly_one_input(tmp_path, session_dirs, capsys):
    model = str(tmp_path / "m.txt")
    argv = ["train", "--state", "Concentration", "--out", model] + FAST
    assert main(argv + session_dirs[:2]) == 0
    out = str(tmp_path / "p.csv")
    assert main(["predict", "--model", model, "--out", out]) == 2
    feats = os.path.join(session_dirs[0], "features.csv")
    assert main(["predict", "--model", model, "--session", session_dirs[0],
                 "--features", feats, "--out", out]) == 2
    assert "exactly one" in capsys.readouterr().err


def test_strict_escalates_solver_stall(tmp_path, session_dirs, capsys):
    out = str(tmp_path / "stall.txt")
    argv = ["train", "--state", "Concentration", "--out", out,
            "--tol", "1e-14", "--max-iter", "2"] + FAST
    # non-strict: warning on stderr, still exits 0
    assert main(argv + session_dirs[:2]) == 0
    assert "duality gap" in capsys.readouterr().err
    assert main(argv + ["--strict"] + session_dirs[:2]) == 3
    assert "duality gap" in capsys.readouterr().err
