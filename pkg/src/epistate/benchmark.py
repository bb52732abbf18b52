"""Synthetic benchmark suites for the pipeline's evaluation gates.

Sessions carry planted region structure: each one rises to a random
plateau, holds it, decays to a second random plateau, and holds again,
so the rating's value range differs from session to session while
transitions keep a fixed 40-frame scale. Ten of the twelve channels
couple to the latent rating (linear, quadratic, and sinusoidal).

Two designs share that skeleton. The ablation and classifier suites
set channel noise well above trace noise, so the velocity and event
columns carry no signal inside plateaus; the region-gated model can
drop those dimensions on SUSTAIN rows while an ungated kernel must
carry them everywhere, and that asymmetry is what the gate buys. The
sweep suite instead shifts several channels up during rises and down
during decays, so levels alone cannot be inverted; the model has to
resolve the region from slope columns whose quality peaks at windows
near the transition scale, giving the sweep an interior optimum.

Everything here is deterministic given the seeds, and the trial
helpers are shared by the acceptance tests and the runnable scripts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dataset import (
    CHANNELS,
    N_CHANNELS,
    REGION_ORDER,
    AnnotationTrace,
    Coupling,
    FeatureSeries,
    RegionLabel,
    RegionLabels,
    Segment,
    Session,
    State,
    SynthConfig,
    synth_session,
)
from .errors import InputError
from .evaluation import EvalReport, ablate_regions, window_sweep
from .regions import (
    ForestParams,
    label_regions,
    region_roc,
    train_region_classifier,
)
from .regress import StateModelConfig, SvrParams, training_weights
from .stats import MicParams
from .temporal import KINDS, WindowConfig, build_design_matrix, weight_features

#: State whose trace the benchmark sessions carry.
BENCH_STATE = State.CONCENTRATION

#: Planted channel couplings. Unlisted channels stay pure noise.
BENCH_COUPLINGS = {
    "inBrL": Coupling("linear", 0.60),
    "inBrR": Coupling("linear", 0.55, 0.05),
    "otBrL": Coupling("linear", 0.45),
    "otBrR": Coupling("linear", 0.50, -0.05),
    "eyeOL": Coupling("quadratic", 0.50),
    "eyeOR": Coupling("quadratic", 0.45, 0.05),
    "oLipH": Coupling("sinusoidal", 0.40, 0.0, 0.5),
    "iLipH": Coupling("sinusoidal", 0.35, 0.0, 1.0),
    "LpCDt": Coupling("linear", 0.40, 0.10),
    "Yaw": Coupling("linear", -0.30),
}

#: Sweep-suite offsets added to a channel during RISE and subtracted
#: during DECAY, on top of its baseline coupling.
SWEEP_HYSTERESIS = {
    "inBrL": 0.20,
    "inBrR": 0.18,
    "otBrL": 0.15,
    "otBrR": 0.16,
    "LpCDt": 0.14,
    "Yaw": -0.12,
}


@dataclass(frozen=True)
class BenchmarkConfig:
    """Shape and noise of one synthetic benchmark suite."""

    n_sessions: int = 20
    sigma: float = 0.16
    trace_sigma: float = 0.01
    rise: int = 40
    sustain: int = 60
    decay: int = 40
    lead: int = 0
    fps: float = 25.0

    def __post_init__(self):
        if self.n_sessions < 1:
            raise InputError("n_sessions must be positive")
        if self.lead < 0:
            raise InputError("lead pad cannot be negative")
        for name in ("rise", "sustain", "decay"):
            if getattr(self, name) < 2:
                raise InputError(f"{name} segment too short")

    @property
    def n_frames(self) -> int:
        return self.lead + self.rise + self.decay + 2 * self.sustain


#: Classifier gate runs at equal channel and trace noise.
CLASSIFIER_SIGMA = 0.02


def _plan(rng, cfg: BenchmarkConfig):
    """Rise to a random plateau, hold, decay past it, hold. Slopes are
    set by the drawn heights so the transition scale stays fixed while
    levels vary across sessions. An optional lead pad holds the start
    level first, keeping early segments inside the windowed rows even
    at large window sizes."""
    h0 = rng.uniform(-0.85, -0.45)
    h1 = rng.uniform(0.25, 0.80)
    h2 = h1 - rng.uniform(0.60, 1.20)
    plan = (
        Segment(RegionLabel.RISE, cfg.rise, (h1 - h0) / (cfg.rise - 1)),
        Segment(RegionLabel.SUSTAIN, cfg.sustain, 0.0),
        Segment(RegionLabel.DECAY, cfg.decay, (h2 - h1) / (cfg.decay - 1)),
        Segment(RegionLabel.SUSTAIN, cfg.sustain, 0.0),
    )
    if cfg.lead:
        plan = (Segment(RegionLabel.SUSTAIN, cfg.lead, 0.0),) + plan
    return plan, h0


def benchmark_session(seed: int, cfg: BenchmarkConfig = BenchmarkConfig(),
                      session_id: str = "") -> Session:
    """One planted session; the seed fixes plan heights and noise."""
    rng = np.random.default_rng(seed)
    plan, start = _plan(rng, cfg)
    synth = SynthConfig(
        n_frames=cfg.n_frames, plan=plan, couplings=BENCH_COUPLINGS, fps=cfg.fps,
        sigma=cfg.sigma, trace_sigma=cfg.trace_sigma, start=start,
        seed=int(rng.integers(0, 2**31)), state=BENCH_STATE,
        session_id=session_id or f"bench{seed:06d}")
    return synth_session(synth)


def benchmark_sessions(master_seed: int,
                       cfg: BenchmarkConfig = BenchmarkConfig()) -> list:
    """Session list for one trial; each session gets its own stream."""
    rng = np.random.default_rng(master_seed)
    return [benchmark_session(int(rng.integers(0, 2**31)), cfg,
                              session_id=f"s{i:03d}")
            for i in range(cfg.n_sessions)]


def benchmark_model_config(window: int = 20) -> StateModelConfig:
    """Model settings used by every synthetic gate.

    tau clears the slope noise of a smoothed flat trace by an order of
    magnitude while staying well under the planted transition slopes;
    the tight epsilon keeps the regressors out of the slack regime
    where arm differences vanish.
    """
    return StateModelConfig(
        window=window,
        tau=0.15,
        mic=MicParams(),
        forest=ForestParams(n_trees=25, max_depth=10, seed=0),
        svr=SvrParams(epsilon=0.02),
        mic_max_points=350,
    )


def ablation_trial(seed: int, k: int = 10,
                   cfg: BenchmarkConfig = BenchmarkConfig(),
                   window: int = 20, jobs: int = 1) -> EvalReport:
    """Gated vs ungated cross-validation on one planted suite."""
    sessions = benchmark_sessions(seed, cfg)
    return ablate_regions(sessions, BENCH_STATE, benchmark_model_config(window),
                          k=k, seed=seed, jobs=jobs)


def classifier_trial(seed: int, cfg: BenchmarkConfig = None,
                     n_trees: int = 50, holdout: int = 5,
                     jobs: int = 1) -> dict:
    """Train the region forest on part of a suite, score one-vs-rest
    ROC AUC per region on held-out rows against the planted labels."""
    if cfg is None:
        cfg = BenchmarkConfig(sigma=CLASSIFIER_SIGMA,
                              trace_sigma=CLASSIFIER_SIGMA)
    sessions = benchmark_sessions(seed, cfg)
    if not (0 < holdout < len(sessions)):
        raise InputError(f"holdout {holdout} out of range")
    train, test = sessions[holdout:], sessions[:holdout]

    mcfg = benchmark_model_config()
    window = mcfg.window_for(BENCH_STATE)
    smooth = mcfg.smooth_for(BENCH_STATE)
    wc = WindowConfig(size=window, deadband=mcfg.deadband)
    weights = training_weights(train, BENCH_STATE, mcfg)

    def weighted_rows(sess):
        m = build_design_matrix(sess.features, wc, KINDS)
        return weight_features(m, weights, str(BENCH_STATE))

    rows = [weighted_rows(s) for s in train]
    labels = [label_regions(s.traces[BENCH_STATE], smooth=smooth,
                            tau=mcfg.tau).for_window(window)
              for s in train]
    x = np.vstack([m.values for m in rows])
    y = np.concatenate([lab.codes for lab in labels])
    params = replace(mcfg.forest, n_trees=n_trees, seed=seed)
    clf = train_region_classifier(x, y, params, jobs=jobs)

    scores = {}
    for sess in test:
        m = weighted_rows(sess)
        truth = RegionLabels(sess.regions[BENCH_STATE].codes[window - 1:])
        for region, auc in region_roc(clf, m, truth).items():
            scores.setdefault(region, []).append(auc)
    return {region: float(np.mean(v)) for region, v in scores.items()}


def sweep_session(seed: int, cfg: BenchmarkConfig,
                  session_id: str = "") -> Session:
    """One hysteretic session for the window sweep.

    Levels alone cannot be inverted here: the channels listed in
    SWEEP_HYSTERESIS sit higher while the rating rises and lower while
    it decays, so reading them requires knowing the region, and the
    region in turn is only legible from the windowed slope columns.
    Short windows leave those columns too noisy to route on; long ones
    blur them across segment boundaries. The same plan generator as
    the other suites keeps the transition scale at 40 frames.
    """
    rng = np.random.default_rng(seed)
    plan, start = _plan(rng, cfg)
    n = cfg.n_frames
    inc = np.zeros(n, dtype=np.float64)
    codes = np.empty(n, dtype=np.int8)
    t = 0
    for seg in plan:
        inc[t:t + seg.frames] = seg.slope
        codes[t:t + seg.frames] = REGION_ORDER.index(seg.kind)
        t += seg.frames
    inc[0] = 0.0
    latent = np.clip(start + np.cumsum(inc), -1.0, 1.0)
    rise = codes == REGION_ORDER.index(RegionLabel.RISE)
    decay = codes == REGION_ORDER.index(RegionLabel.DECAY)
    gate = np.where(rise, 1.0, np.where(decay, -1.0, 0.0))

    # same draw order as the plain generator: trace first, then channels
    trace_vals = np.clip(latent + rng.normal(0.0, cfg.trace_sigma, n),
                         -1.0, 1.0)
    data = np.empty((n, N_CHANNELS), dtype=np.float64)
    for j, ch in enumerate(CHANNELS):
        noise = rng.normal(0.0, cfg.sigma, n)
        base = BENCH_COUPLINGS.get(ch, Coupling()).apply(latent)
        data[:, j] = base + SWEEP_HYSTERESIS.get(ch, 0.0) * gate + noise

    state = BENCH_STATE
    return Session(
        session_id=session_id or f"sweep{seed:06d}",
        features=FeatureSeries(data=data, fps=cfg.fps),
        traces={state: AnnotationTrace(state=state, values=trace_vals,
                                       fps=cfg.fps)},
        regions={state: RegionLabels(codes)},
    )


def sweep_sessions(master_seed: int, cfg: BenchmarkConfig) -> list:
    rng = np.random.default_rng(master_seed)
    return [sweep_session(int(rng.integers(0, 2**31)), cfg,
                          session_id=f"s{i:03d}")
            for i in range(cfg.n_sessions)]


def sweep_trial(seed: int, windows=(5, 10, 20, 40, 60, 80, 100),
                k: int = 5, n_sessions: int = 12, jobs: int = 1) -> EvalReport:
    """Window sweep over a hysteretic suite with 40-frame transitions.

    The lead pad keeps the rise segment among the windowed rows even
    at the largest swept window.
    """
    cfg = BenchmarkConfig(n_sessions=n_sessions, sustain=40,
                          lead=max(windows))
    sessions = sweep_sessions(seed, cfg)
    return window_sweep(sessions, BENCH_STATE, windows,
                        benchmark_model_config(), k=k, seed=seed, jobs=jobs)
