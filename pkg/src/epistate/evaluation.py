"""CoERR scoring, cross-validation, region ablation, and window sweep.

The fold unit is the whole session, which keeps temporally adjacent
frames out of opposing folds. With fewer sessions than folds the
splitter falls back to contiguous frame blocks inside each session,
leaving a one-window gap between any train block and the test block.
"""

from __future__ import annotations

import platform
from dataclasses import dataclass

import numpy as np

from .dataset import (
    AnnotationTrace,
    FeatureSeries,
    RegionLabels,
    Session,
    State,
    parse_state,
)
from .errors import BadFormat, InputError, TooFewSessions
from .parallel import parallel_map
from .regress import (
    StateModelConfig,
    predict_state,
    train_state_model,
    train_ungated_model,
    training_weights,
)
from .stats import pearson

DEFAULT_SWEEP = (5, 10, 20, 40, 60, 80, 100)

_F = ".17g"


def coerr(pred, truth) -> float:
    """Pearson correlation between predicted and ground-truth ratings."""
    a = pred.values if isinstance(pred, AnnotationTrace) else np.asarray(pred)
    b = truth.values if isinstance(truth, AnnotationTrace) else np.asarray(truth)
    return pearson(a, b)


# ---------------------------------------------------------------------------
# fold construction


def fold_assignment(n_sessions: int, k: int, seed: int) -> list:
    """k disjoint test groups of session indices, round-robin after a
    seeded shuffle. Every session lands in exactly one group."""
    if k < 2:
        raise InputError(f"k must be >= 2, got {k}")
    if n_sessions < k:
        raise TooFewSessions(f"{n_sessions} sessions cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n_sessions)
    return [sorted(int(i) for i in perm[f::k]) for f in range(k)]


def _slice_session(s: Session, a: int, b: int) -> Session:
    feats = FeatureSeries(data=s.features.data[a:b], fps=s.features.fps)
    traces = {st: AnnotationTrace(st, tr.values[a:b], tr.fps)
              for st, tr in s.traces.items()}
    regions = {st: RegionLabels(labels.codes[a:b])
               for st, labels in s.regions.items()}
    return Session(session_id=f"{s.session_id}[{a}:{b}]", features=feats,
                   traces=traces, regions=regions)


def block_folds(sessions, k: int, window: int, smooth: int):
    """Per-fold (train_subsessions, test_subsessions) from contiguous
    blocks of each session, with a one-window train/test gap."""
    need = max(window, smooth, 2)
    folds = []
    for f in range(k):
        train, test = [], []
        for s in sessions:
            n = s.n_frames
            bounds = [round(j * n / k) for j in range(k + 1)]
            a, b = bounds[f], bounds[f + 1]
            if b - a < need:
                raise TooFewSessions(
                    f"session {s.session_id!r}: block of {b - a} frames is too "
                    f"short for window {window} at k={k}")
            test.append(_slice_session(s, a, b))
            lo, hi = max(0, a - window), min(n, b + window)
            if lo >= need:
                train.append(_slice_session(s, 0, lo))
            if n - hi >= need:
                train.append(_slice_session(s, hi, n))
        if not train:
            raise TooFewSessions(
                f"fold {f}: no training frames remain outside the test blocks")
        folds.append((train, test))
    return folds


def _session_folds(sessions, k: int, seed: int):
    groups = fold_assignment(len(sessions), k, seed)
    folds = []
    for f in range(k):
        test = [sessions[i] for i in groups[f]]
        train = [s for g, grp in enumerate(groups) if g != f
                 for s in (sessions[i] for i in grp)]
        folds.append((train, test))
    return folds


def make_folds(sessions, state: State, cfg: StateModelConfig, k: int, seed: int):
    """Session-level folds, or block-level when sessions are scarce."""
    sessions = list(sessions)
    if not sessions:
        raise TooFewSessions("no sessions")
    if len(sessions) >= k:
        return _session_folds(sessions, k, seed)
    return block_folds(sessions, k, cfg.window_for(state),
                       cfg.smooth_for(state))


# ---------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class EvalReport:
    """Cross-validation outcome, optionally with ablation and sweep.

    fold_coerr carries the gated (with-region) arm. ablation, when
    present, is (with_mean, without_mean, delta_percent) plus the
    without-arm fold values; delta is relative percent change. sweep is
    a (window, mean, std) triple per swept size.
    """

    state: State
    k: int
    seed: int
    window: int
    fold_coerr: tuple = ()
    without_fold_coerr: tuple = ()
    sweep: tuple = ()
    config_echo: tuple = ()
    versions: tuple = ()

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_coerr))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_coerr))

    @property
    def has_ablation(self) -> bool:
        return bool(self.without_fold_coerr)

    @property
    def without_mean(self) -> float:
        return float(np.mean(self.without_fold_coerr))

    @property
    def delta_percent(self) -> float:
        """Relative percent change of mean CoERR, gated vs ungated."""
        return 100.0 * (self.mean - self.without_mean) / self.without_mean

    @property
    def best_window(self) -> int:
        if not self.sweep:
            raise InputError("report has no sweep section")
        means = [m for _, m, _ in self.sweep]
        return int(self.sweep[int(np.argmax(means))][0])

    def to_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epistate-evalreport v1\n")
            fh.write(f"state,{self.state}\n")
            fh.write(f"k,{self.k}\n")
            fh.write(f"seed,{self.seed}\n")
            fh.write(f"window,{self.window}\n")
            fh.write(f"config,{len(self.config_echo)}\n")
            for key, val in self.config_echo:
                fh.write(f"c,{key},{val}\n")
            fh.write(f"versions,{len(self.versions)}\n")
            for name, ver in self.versions:
                fh.write(f"v,{name},{ver}\n")
            fh.write(f"folds,{len(self.fold_coerr)}\n")
            for i, v in enumerate(self.fold_coerr):
                fh.write(f"fold,{i},{v:{_F}}\n")
            fh.write(f"without_folds,{len(self.without_fold_coerr)}\n")
            for i, v in enumerate(self.without_fold_coerr):
                fh.write(f"wfold,{i},{v:{_F}}\n")
            if self.has_ablation:
                fh.write(f"ablation,{self.mean:{_F}},{self.without_mean:{_F}},"
                         f"{self.delta_percent:{_F}}\n")
            fh.write(f"sweep,{len(self.sweep)}\n")
            for w, m, s in self.sweep:
                fh.write(f"s,{w},{m:{_F}},{s:{_F}}\n")
            fh.write("end\n")

    @classmethod
    def from_text(cls, path) -> "EvalReport":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "epistate-evalreport v1":
            raise BadFormat(f"not an eval report: {path}")
        try:
            i = 1
            state = parse_state(lines[i].split(",")[1]); i += 1
            k = int(lines[i].split(",")[1]); i += 1
            seed = int(lines[i].split(",")[1]); i += 1
            window = int(lines[i].split(",")[1]); i += 1

            def block(tag, row_tag, i):
                head = lines[i].split(",")
                if head[0] != tag:
                    raise BadFormat(f"expected {tag} count, got {lines[i]!r}")
                count = int(head[1])
                rows = []
                for ln in lines[i + 1:i + 1 + count]:
                    parts = ln.split(",")
                    if parts[0] != row_tag:
                        raise BadFormat(f"expected {row_tag} row, got {ln!r}")
                    rows.append(parts[1:])
                return rows, i + 1 + count

            cfg_rows, i = block("config", "c", i)
            ver_rows, i = block("versions", "v", i)
            fold_rows, i = block("folds", "fold", i)
            wfold_rows, i = block("without_folds", "wfold", i)
            if lines[i].startswith("ablation,"):
                i += 1  # derived from the fold lists; no state to restore
            sweep_rows, i = block("sweep", "s", i)
            if lines[i] != "end":
                raise BadFormat("missing end marker")
        except BadFormat:
            raise
        except (IndexError, ValueError) as exc:
            raise BadFormat(f"corrupt eval report {path}: {exc}") from None
        return cls(
            state=state, k=k, seed=seed, window=window,
            fold_coerr=tuple(float(r[1]) for r in fold_rows),
            without_fold_coerr=tuple(float(r[1]) for r in wfold_rows),
            sweep=tuple((int(r[0]), float(r[1]), float(r[2])) for r in sweep_rows),
            config_echo=tuple((r[0], r[1]) for r in cfg_rows),
            versions=tuple((r[0], r[1]) for r in ver_rows),
        )

    def write_fold_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("fold,coerr" + (",coerr_without" if self.has_ablation else "")
                     + "\n")
            for i, v in enumerate(self.fold_coerr):
                row = f"{i},{v:{_F}}"
                if self.has_ablation:
                    row += f",{self.without_fold_coerr[i]:{_F}}"
                fh.write(row + "\n")

    def write_sweep_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("window,mean_coerr,std_coerr\n")
            for w, m, s in self.sweep:
                fh.write(f"{w},{m:{_F}},{s:{_F}}\n")


def _versions() -> tuple:
    from . import __version__
    return (("epistate", __version__), ("numpy", np.__version__),
            ("python", platform.python_version()))


def config_echo(cfg: StateModelConfig) -> tuple:
    """Flat, ordered key/value echo of every training parameter."""
    pairs = [
        ("window", cfg.window), ("deadband", cfg.deadband), ("tau", cfg.tau),
        ("smooth", cfg.smooth), ("mic_max_points", cfg.mic_max_points),
        ("mic.alpha", cfg.mic.alpha), ("mic.c", cfg.mic.c),
        ("forest.n_trees", cfg.forest.n_trees),
        ("forest.max_depth", cfg.forest.max_depth),
        ("forest.min_leaf", cfg.forest.min_leaf),
        ("forest.features_per_split", cfg.forest.features_per_split),
        ("forest.bootstrap", int(cfg.forest.bootstrap)),
        ("forest.seed", cfg.forest.seed),
        ("svr.C", cfg.svr.C), ("svr.epsilon", cfg.svr.epsilon),
        ("svr.kernel", cfg.svr.kernel), ("svr.gamma", cfg.svr.gamma),
        ("svr.tol", cfg.svr.tol), ("svr.max_iter", cfg.svr.max_iter),
    ]
    return tuple((key, repr(val) if isinstance(val, float) else str(val))
                 for key, val in pairs)


# ---------------------------------------------------------------------------
# cross-validation


def _held_out_coerr(model, session, state, window: int) -> float:
    """Score one held-out session, skipping the back-filled head.

    The first window-1 frames of a prediction are padding, not model
    output, so they are excluded from the correlation.
    """
    pred = predict_state(model, session.features)
    body = slice(window - 1, None)
    return coerr(pred.values[body], session.trace(state).values[body])


def _fold_coerr(model_train, folds, state, cfg, jobs):
    """Mean held-out CoERR per fold; model_train builds one model."""
    window = cfg.window_for(state)

    def run(fold):
        train, test = fold
        weights = training_weights(train, state, cfg)
        model = model_train(train, state, cfg, weights)
        scores = [_held_out_coerr(model, s, state, window) for s in test]
        return float(np.mean(scores))

    return tuple(parallel_map(run, folds, jobs))


def kfold_cv(sessions, state, cfg: StateModelConfig = StateModelConfig(),
             k: int = 10, seed: int = 0, jobs: int = 1) -> EvalReport:
    """Session-level k-fold cross-validation of the gated model."""
    state = state if isinstance(state, State) else parse_state(state)
    folds = make_folds(sessions, state, cfg, k, seed)

    def build(train, st, c, w):
        return train_state_model(train, st, c, jobs=1, weights=w)

    fold_scores = _fold_coerr(build, folds, state, cfg, jobs)
    return EvalReport(state=state, k=k, seed=seed,
                      window=cfg.window_for(state), fold_coerr=fold_scores,
                      config_echo=config_echo(cfg), versions=_versions())


def ablate_regions(sessions, state, cfg: StateModelConfig = StateModelConfig(),
                   k: int = 10, seed: int = 0, jobs: int = 1) -> EvalReport:
    """Gated vs ungated arms on identical folds and identical weights."""
    state = state if isinstance(state, State) else parse_state(state)
    folds = make_folds(sessions, state, cfg, k, seed)

    window = cfg.window_for(state)

    def run(fold):
        train, test = fold
        weights = training_weights(train, state, cfg)
        gated = train_state_model(train, state, cfg, jobs=1, weights=weights)
        ungated = train_ungated_model(train, state, cfg, jobs=1, weights=weights)
        with_scores = [_held_out_coerr(gated, s, state, window) for s in test]
        without_scores = [_held_out_coerr(ungated, s, state, window) for s in test]
        return float(np.mean(with_scores)), float(np.mean(without_scores))

    pairs = parallel_map(run, folds, jobs)
    return EvalReport(state=state, k=k, seed=seed,
                      window=cfg.window_for(state),
                      fold_coerr=tuple(p[0] for p in pairs),
                      without_fold_coerr=tuple(p[1] for p in pairs),
                      config_echo=config_echo(cfg), versions=_versions())


def window_sweep(sessions, state, windows=DEFAULT_SWEEP,
                 cfg: StateModelConfig = StateModelConfig(), k: int = 10,
                 seed: int = 0, jobs: int = 1) -> EvalReport:
    """kfold_cv at each window size; the curve lands in report.sweep."""
    state = state if isinstance(state, State) else parse_state(state)
    sessions = list(sessions)
    if not sessions:
        raise TooFewSessions("no sessions")
    windows = tuple(int(w) for w in windows)
    if not windows:
        raise InputError("windows list is empty")
    shortest = min(s.n_frames for s in sessions)
    for w in windows:
        if w < 2 or w > shortest:
            raise InputError(f"window {w} outside [2, {shortest}] for these sessions")

    curve = []
    for w in windows:
        wcfg = StateModelConfig(
            window=w, deadband=cfg.deadband, tau=cfg.tau, smooth=cfg.smooth,
            mic=cfg.mic, forest=cfg.forest, svr=cfg.svr,
            mic_max_points=cfg.mic_max_points)
        rep = kfold_cv(sessions, state, wcfg, k=k, seed=seed, jobs=jobs)
        curve.append((w, rep.mean, rep.std))
    return EvalReport(state=state, k=k, seed=seed,
                      window=cfg.window_for(state), sweep=tuple(curve),
                      config_echo=config_echo(cfg), versions=_versions())
