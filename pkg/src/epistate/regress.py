"""Epsilon-insensitive kernel regression and the per-state predictor.

train_svr solves the dual of epsilon-SVR with the bias folded into the
kernel (K' = K + 1), by exact cyclic coordinate descent over the box
[-C, C]^n. Training stops when the duality-gap proxy drops below tol
(relative to the primal objective) or after max_iter sweeps.

A StateModel bundles MIC weights, a region classifier, and one
regressor per region: the classifier routes every design-matrix row to
the regressor trained on that region. SUSTAIN sees only the original
feature columns, RISE and DECAY see all four kinds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import (
    CHANNELS,
    DEFAULT_WINDOWS,
    REGION_ORDER,
    AnnotationTrace,
    FeatureSeries,
    RegionLabel,
    Session,
    State,
    parse_region,
    parse_state,
)
from .errors import (
    ArityMismatch,
    BadFormat,
    EmptyInput,
    InputError,
    LengthMismatch,
    MissingRegion,
    OutOfRange,
    TooFewRows,
)
from .parallel import parallel_map
from .regions import (
    DEFAULT_TAU,
    ForestParams,
    RegionClassifier,
    label_regions,
    train_region_classifier,
)
from .stats import MicMatrix, MicParams, mic
from .temporal import (
    KINDS,
    DesignMatrix,
    WindowConfig,
    build_design_matrix,
    targets_for_windows,
    velocity,
    velocity_feature_name,
    weight_features,
)

KERNELS = ("rbf", "linear")

SUSTAIN_KINDS = ("i",)

_F = ".17g"  # serialized floats must survive a round trip exactly


@dataclass(frozen=True)
class SvrParams:
    """gamma 0 means 1/(d * mean column variance); max_iter 0 means 10n."""

    C: float = 1.0
    epsilon: float = 0.05
    kernel: str = "rbf"
    gamma: float = 0.0
    tol: float = 1e-3
    max_iter: int = 0

    def __post_init__(self):
        if not (self.C > 0):
            raise InputError(f"C must be > 0, got {self.C}")
        if not (self.epsilon >= 0):
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        k = str(self.kernel).lower()
        if k not in KERNELS:
            raise InputError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        object.__setattr__(self, "kernel", k)
        if not (self.gamma >= 0):
            raise InputError(f"gamma must be >= 0, got {self.gamma}")
        if not (self.tol > 0):
            raise InputError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 0:
            raise InputError(f"max_iter must be >= 0, got {self.max_iter}")


def _kernel(kind: str, gamma: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return a @ b.T
    sq = (np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :]
          - 2.0 * (a @ b.T))
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class Regressor:
    """Trained kernel expansion over standardized inputs.

    sv holds the standardized support rows, beta their dual
    coefficients, and bias the sum of all dual coefficients (the
    bias-in-kernel formulation makes that the intercept). objective is
    the per-sweep dual objective from training; it is not serialized.
    """

    kernel: str
    gamma: float
    C: float
    epsilon: float
    tol: float
    max_iter: int
    sv: np.ndarray
    beta: np.ndarray
    bias: float
    mean: np.ndarray
    scale: np.ndarray
    converged: bool
    n_iter: int
    objective: tuple = ()

    def __post_init__(self):
        for name in ("sv", "beta", "mean", "scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def arity(self) -> int:
        return self.mean.size

    @property
    def n_support(self) -> int:
        return self.beta.size

    def _rows(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2:
            raise InputError("regressor input must be a row or a 2-D matrix")
        if x.shape[1] != self.arity:
            raise ArityMismatch(x.shape[1], self.arity)
        return (x - self.mean) / self.scale, single

    def decision_values(self, x):
        """Kernel expansion plus bias, no clipping."""
        z, single = self._rows(x)
        if self.n_support:
            out = _kernel(self.kernel, self.gamma, z, self.sv) @ self.beta + self.bias
        else:
            out = np.full(z.shape[0], self.bias)
        return float(out[0]) if single else out

    def predict(self, x):
        """decision_values clipped to the rating range [-1, +1]."""
        out = self.decision_values(x)
        if isinstance(out, float):
            return float(min(1.0, max(-1.0, out)))
        return np.clip(out, -1.0, 1.0)

    def write(self, fh) -> None:
        fh.write(f"kernel,{self.kernel}\n")
        fh.write(f"params,C={self.C:{_F}},epsilon={self.epsilon:{_F}},"
                 f"gamma={self.gamma:{_F}},tol={self.tol:{_F}},"
                 f"max_iter={self.max_iter}\n")
        fh.write(f"arity,{self.arity}\n")
        fh.write(f"converged,{int(self.converged)}\n")
        fh.write(f"n_iter,{self.n_iter}\n")
        fh.write(f"bias,{self.bias:{_F}}\n")
        fh.write("mean," + ",".join(format(v, _F) for v in self.mean) + "\n")
        fh.write("scale," + ",".join(format(v, _F) for v in self.scale) + "\n")
        fh.write(f"n_support,{self.n_support}\n")
        for b, row in zip(self.beta, self.sv):
            fh.write(f"sv,{b:{_F}}," + ",".join(format(v, _F) for v in row) + "\n")

    @classmethod
    def parse(cls, lines, start: int):
        """Read one serialized regressor from lines[start:]."""
        i = start
        try:
            kernel = lines[i].split(",")[1]
            kv = dict(item.split("=") for item in lines[i + 1].split(",")[1:])
            arity = int(lines[i + 2].split(",")[1])
            converged = bool(int(lines[i + 3].split(",")[1]))
            n_iter = int(lines[i + 4].split(",")[1])
            bias = float(lines[i + 5].split(",")[1])
            mean = [float(v) for v in lines[i + 6].split(",")[1:]]
            scale = [float(v) for v in lines[i + 7].split(",")[1:]]
            n_support = int(lines[i + 8].split(",")[1])
            beta, sv = [], []
            for ln in lines[i + 9:i + 9 + n_support]:
                parts = ln.split(",")
                if parts[0] != "sv" or len(parts) != 2 + arity:
                    raise BadFormat(f"bad support row: {ln!r}")
                beta.append(float(parts[1]))
                sv.append([float(v) for v in parts[2:]])
            reg = cls(kernel=kernel, gamma=float(kv["gamma"]), C=float(kv["C"]),
                      epsilon=float(kv["epsilon"]), tol=float(kv["tol"]),
                      max_iter=int(kv["max_iter"]),
                      sv=np.array(sv, dtype=np.float64).reshape(n_support, arity),
                      beta=np.array(beta, dtype=np.float64),
                      bias=bias, mean=np.array(mean), scale=np.array(scale),
                      converged=converged, n_iter=n_iter)
        except BadFormat:
            raise
        except (IndexError, ValueError, KeyError) as exc:
            raise BadFormat(f"corrupt regressor data: {exc}") from None
        return reg, i + 9 + n_support


def _standardize(x: np.ndarray):
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (x - mean) / scale, mean, scale


def train_svr(m, targets, params: SvrParams = SvrParams()) -> Regressor:
    """Fit epsilon-SVR by exact coordinate descent on the dual.

    Inputs are standardized per column (statistics kept on the model).
    If the duality gap never reaches tol the best-so-far solution is
    returned with converged=False and a warning.
    """
    x = np.ascontiguousarray(m.values if isinstance(m, DesignMatrix) else m,
                             dtype=np.float64)
    if x.ndim != 2:
        raise InputError("training matrix must be 2-D")
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim != 1 or y.size != x.shape[0]:
        raise LengthMismatch(x.shape[0], y.size)
    n, d = x.shape
    if n < 2:
        raise TooFewRows(n, 2)
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise InputError("training data contains non-finite values")
    bad = np.abs(y) > 1.0 + 1e-6
    if bad.any():
        i = int(np.argmax(bad))
        raise OutOfRange(i, float(y[i]))
    y = np.clip(y, -1.0, 1.0)

    z, mean, scale = _standardize(x)
    gamma = params.gamma
    if gamma == 0.0:
        mean_var = float(np.mean(z.var(axis=0)))
        gamma = 1.0 / (d * mean_var) if mean_var > 0 else 1.0

    kp = _kernel(params.kernel, gamma, z, z)
    kp += 1.0  # bias folded into the kernel
    diag = np.ascontiguousarray(np.diag(kp))
    C, eps = params.C, params.epsilon
    max_iter = params.max_iter or 10 * n

    beta = np.zeros(n)
    g = np.zeros(n)  # K' beta, maintained incrementally
    objective = []
    converged = False
    sweeps = 0
    # visiting coordinates in a fresh random order each sweep converges far
    # faster than cyclic order on boundary-heavy problems; the fixed seed
    # keeps training deterministic
    order_rng = np.random.default_rng(0x5B52)
    while sweeps < max_iter:
        for i in order_rng.permutation(n):
            r = g[i] - diag[i] * beta[i]
            zres = y[i] - r
            b_new = max(abs(zres) - eps, 0.0)
            if b_new != 0.0:
                b_new = min(b_new / diag[i], C)
                if zres < 0:
                    b_new = -b_new
            step = b_new - beta[i]
            if step != 0.0:
                g += step * kp[i]
                beta[i] = b_new
        sweeps += 1
        if sweeps % 20 == 0:
            g = kp @ beta  # reset accumulated drift
        quad = float(beta @ g)
        lin = float(y @ beta)
        l1 = float(np.abs(beta).sum())
        objective.append(0.5 * quad - lin + eps * l1)
        hinge = float(np.maximum(np.abs(y - g) - eps, 0.0).sum())
        primal = 0.5 * quad + C * hinge
        gap = quad - lin + eps * l1 + C * hinge
        if gap <= params.tol * max(1.0, abs(primal)):
            converged = True
            break
    if not converged:
        warnings.warn(f"svr stopped after {sweeps} sweeps with the duality gap "
                      "above tol; best-so-far model returned", stacklevel=2)

    support = beta != 0.0
    return Regressor(kernel=params.kernel, gamma=gamma, C=C, epsilon=eps,
                     tol=params.tol, max_iter=max_iter,
                     sv=z[support], beta=beta[support], bias=float(beta.sum()),
                     mean=mean, scale=scale, converged=converged,
                     n_iter=sweeps, objective=tuple(objective))


# ---------------------------------------------------------------------------
# per-state model


@dataclass(frozen=True)
class StateModelConfig:
    """Everything train_state_model needs besides the sessions.

    window 0 falls back to the state's default size; smooth 0 falls
    back to the window size. mic_max_points caps (by striding) the
    sample count fed to each MIC estimate, keeping weight computation
    affordable on long inputs.
    """

    window: int = 0
    deadband: float = 0.01
    tau: float = DEFAULT_TAU
    smooth: int = 0
    mic: MicParams = field(default_factory=MicParams)
    forest: ForestParams = field(default_factory=ForestParams)
    svr: SvrParams = field(default_factory=SvrParams)
    mic_max_points: int = 1000

    def __post_init__(self):
        if self.window < 0 or self.window == 1:
            raise InputError(f"window must be 0 (default) or >= 2, got {self.window}")
        if self.smooth < 0 or self.smooth == 1:
            raise InputError(f"smooth must be 0 (default) or >= 2, got {self.smooth}")
        if self.mic_max_points < 16:
            raise InputError("mic_max_points must be >= 16")

    def window_for(self, state: State) -> int:
        return self.window or DEFAULT_WINDOWS[state]

    def smooth_for(self, state: State) -> int:
        return self.smooth or self.window_for(state)


def _subsample(arr: np.ndarray, cap: int) -> np.ndarray:
    n = arr.shape[0]
    if n <= cap:
        return arr
    stride = -(-n // cap)
    return arr[::stride]


def training_weights(sessions, state: State, cfg: StateModelConfig) -> MicMatrix:
    """MIC of each channel, and of each channel's velocity, vs the trace.

    Computed on the supplied sessions only, so cross-validation folds
    never see scores fitted on their own test data.
    """
    feats = np.vstack([s.features.data for s in sessions])
    target = np.concatenate([s.trace(state).values for s in sessions])
    w = cfg.window_for(state)
    wc = WindowConfig(w, cfg.deadband)
    vels = np.vstack([velocity(s.features, wc) for s in sessions])
    vtarget = np.concatenate([s.trace(state).values[w - 1:] for s in sessions])

    feats = _subsample(feats, cfg.mic_max_points)
    target = _subsample(target, cfg.mic_max_points)
    vels = _subsample(vels, cfg.mic_max_points)
    vtarget = _subsample(vtarget, cfg.mic_max_points)

    names = list(CHANNELS) + [velocity_feature_name(ch) for ch in CHANNELS]
    cols = [feats[:, j] for j in range(len(CHANNELS))] + \
           [vels[:, j] for j in range(len(CHANNELS))]
    scores = np.array([[mic(col, target if i < len(CHANNELS) else vtarget,
                            cfg.mic)]
                       for i, col in enumerate(cols)])
    return MicMatrix(features=tuple(names), states=(str(state),),
                     scores=scores, alpha=cfg.mic.alpha, c=cfg.mic.c)


def _weighted_matrix(session: Session, state: State, cfg: StateModelConfig,
                     weights: MicMatrix) -> DesignMatrix:
    wc = WindowConfig(cfg.window_for(state), cfg.deadband)
    m = build_design_matrix(session.features, wc, KINDS)
    return weight_features(m, weights, str(state))


def _region_columns(columns, region: RegionLabel) -> np.ndarray:
    kinds = SUSTAIN_KINDS if region is RegionLabel.SUSTAIN else KINDS
    return np.array([k in kinds for _, k in columns])


@dataclass(frozen=True)
class StateModel:
    """Region classifier gating three per-region regressors."""

    state: State
    window: int
    deadband: float
    tau: float
    smooth: int
    fps: float
    weights: MicMatrix
    columns: tuple
    classifier: RegionClassifier
    regressors: dict
    fallbacks: dict

    def __post_init__(self):
        for region in REGION_ORDER:
            if region not in self.regressors:
                raise MissingRegion(str(region))
        if len(self.regressors) != len(REGION_ORDER):
            raise InputError("unexpected extra regressor keys")

    def region_kinds(self, region: RegionLabel):
        return SUSTAIN_KINDS if region is RegionLabel.SUSTAIN else KINDS

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epistate-statemodel v1\n")
            _write_common(self, fh)
            fh.write("fallbacks," + ",".join(
                f"{r}={s}" for r, s in sorted(
                    ((str(k), str(v)) for k, v in self.fallbacks.items()))) + "\n")
            fh.write("forest\n")
            self.classifier.write(fh)
            for region in REGION_ORDER:
                fh.write(f"svr,{region}\n")
                if region in self.fallbacks:
                    fh.write(f"fallback,{self.fallbacks[region]}\n")
                else:
                    self.regressors[region].write(fh)
            fh.write("end\n")

    @classmethod
    def load(cls, path) -> "StateModel":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "epistate-statemodel v1":
            raise BadFormat(f"not a state-model file: {path}")
        common, i = _parse_common(lines, 1)
        try:
            pairs = [p for p in lines[i].split(",")[1:] if p]
            fallbacks = {parse_region(a): parse_region(b)
                         for a, b in (p.split("=") for p in pairs)}
            if lines[i + 1] != "forest":
                raise BadFormat("missing forest section")
        except (IndexError, ValueError) as exc:
            raise BadFormat(f"corrupt state-model file: {exc}") from None
        classifier, i = RegionClassifier.parse(lines, i + 2)
        regressors = {}
        deferred = {}
        for region in REGION_ORDER:
            if lines[i] != f"svr,{region}":
                raise BadFormat(f"expected svr section for {region}, got {lines[i]!r}")
            i += 1
            if lines[i].startswith("fallback,"):
                deferred[region] = parse_region(lines[i].split(",")[1])
                i += 1
            else:
                regressors[region], i = Regressor.parse(lines, i)
        if i >= len(lines) or lines[i] != "end":
            raise BadFormat("missing end marker")
        for region, src in deferred.items():
            if src not in regressors:
                raise BadFormat(f"fallback source {src} has no regressor")
            regressors[region] = regressors[src]
        if deferred != fallbacks:
            raise BadFormat("fallback declarations do not match svr sections")
        return cls(classifier=classifier, regressors=regressors,
                   fallbacks=fallbacks, **common)


def _write_common(model, fh) -> None:
    """Header shared by the gated and ungated model documents."""
    fh.write(f"state,{model.state}\n")
    fh.write(f"fps,{model.fps:{_F}}\n")
    fh.write(f"window,{model.window}\n")
    fh.write(f"deadband,{model.deadband:{_F}}\n")
    fh.write(f"tau,{model.tau:{_F}}\n")
    fh.write(f"smooth,{model.smooth}\n")
    fh.write("columns," + ",".join(f"{c}:{k}" for c, k in model.columns) + "\n")
    fh.write(f"weights_alpha,{model.weights.alpha:{_F}}\n")
    fh.write(f"weights_clumps,{model.weights.c}\n")
    fh.write(f"weights,{len(model.weights.features)}\n")
    for name in model.weights.features:
        fh.write(f"w,{name},{model.weights.get(name, str(model.state)):{_F}}\n")


def _parse_common(lines, start: int):
    i = start
    try:
        state = parse_state(lines[i].split(",")[1])
        fps = float(lines[i + 1].split(",")[1])
        window = int(lines[i + 2].split(",")[1])
        deadband = float(lines[i + 3].split(",")[1])
        tau = float(lines[i + 4].split(",")[1])
        smooth = int(lines[i + 5].split(",")[1])
        columns = tuple(tuple(tag.split(":")) for tag in lines[i + 6].split(",")[1:])
        alpha = float(lines[i + 7].split(",")[1])
        clumps = int(lines[i + 8].split(",")[1])
        n_weights = int(lines[i + 9].split(",")[1])
        names, scores = [], []
        for ln in lines[i + 10:i + 10 + n_weights]:
            parts = ln.split(",")
            if parts[0] != "w" or len(parts) != 3:
                raise BadFormat(f"bad weight row: {ln!r}")
            names.append(parts[1])
            scores.append([float(parts[2])])
        weights = MicMatrix(features=tuple(names), states=(str(state),),
                            scores=np.array(scores), alpha=alpha, c=clumps)
    except BadFormat:
        raise
    except (IndexError, ValueError) as exc:
        raise BadFormat(f"corrupt model header: {exc}") from None
    common = dict(state=state, fps=fps, window=window, deadband=deadband,
                  tau=tau, smooth=smooth, columns=columns, weights=weights)
    return common, i + 10 + n_weights


def _gather_training(sessions, state, cfg, weights):
    mats, labels, targets = [], [], []
    w = cfg.window_for(state)
    for s in sessions:
        trace = s.trace(state)
        m = _weighted_matrix(s, state, cfg, weights)
        mats.append(m)
        labels.append(label_regions(trace, cfg.smooth_for(state),
                                    cfg.tau).for_window(w).codes)
        targets.append(targets_for_windows(trace.values, w))
    stacked = DesignMatrix(values=np.vstack([m.values for m in mats]),
                           columns=mats[0].columns, window=w,
                           fps=sessions[0].features.fps,
                           deadband=cfg.deadband, weighted=True)
    return stacked, np.concatenate(labels), np.concatenate(targets)


def train_state_model(sessions, state, cfg: StateModelConfig = StateModelConfig(),
                      jobs: int = 1, weights: MicMatrix = None) -> StateModel:
    """Fit weights, region classifier, and per-region regressors.

    Regions absent from the training labels (or with fewer than two
    rows) reuse the SUSTAIN regressor; a missing SUSTAIN trains on all
    rows instead. Either fallback is recorded on the model and warned
    about.

    weights, when given, must have been computed on these same training
    sessions (callers that train several models per fold pass them to
    avoid repeating the MIC scan).
    """
    sessions = list(sessions)
    if not sessions:
        raise EmptyInput("no training sessions")
    state = state if isinstance(state, State) else parse_state(state)
    w = cfg.window_for(state)
    if weights is None:
        weights = training_weights(sessions, state, cfg)
    stacked, labels, targets = _gather_training(sessions, state, cfg, weights)

    classifier = train_region_classifier(stacked, labels, cfg.forest, jobs)

    masks, fallbacks = {}, {}
    for code, region in enumerate(REGION_ORDER):
        mask = labels == code
        if mask.sum() >= 2:
            masks[region] = mask
        else:
            fallbacks[region] = RegionLabel.SUSTAIN
    if RegionLabel.SUSTAIN in fallbacks:
        # nothing to reuse; train the fallback regressor on every row
        del fallbacks[RegionLabel.SUSTAIN]
        masks[RegionLabel.SUSTAIN] = np.ones(labels.size, dtype=bool)
        warnings.warn("no SUSTAIN rows; its regressor is trained on all rows",
                      stacklevel=2)
    for region in fallbacks:
        warnings.warn(f"no training rows for {region}; reusing the SUSTAIN "
                      "regressor", stacklevel=2)

    order = [r for r in REGION_ORDER if r in masks]

    def fit(region):
        mask = masks[region]
        cols = _region_columns(stacked.columns, region)
        return train_svr(stacked.values[np.ix_(mask, cols)], targets[mask],
                         cfg.svr)

    fitted = parallel_map(fit, order, jobs)
    regressors = dict(zip(order, fitted))
    for region, src in fallbacks.items():
        regressors[region] = regressors[src]

    return StateModel(state=state, window=w, deadband=cfg.deadband,
                      tau=cfg.tau, smooth=cfg.smooth_for(state),
                      fps=sessions[0].features.fps, weights=weights,
                      columns=stacked.columns, classifier=classifier,
                      regressors=regressors, fallbacks=fallbacks)


@dataclass(frozen=True)
class Prediction:
    """predict_state with its intermediate products kept for inspection."""

    trace: AnnotationTrace
    raw: np.ndarray      # pre-clip decision values, one per window-end row
    regions: np.ndarray  # classifier codes, one per window-end row


def _model_matrix(model, features: FeatureSeries) -> DesignMatrix:
    wc = WindowConfig(model.window, model.deadband)
    m = build_design_matrix(features, wc, KINDS)
    return weight_features(m, model.weights, str(model.state))


def _backfill(raw: np.ndarray, window: int, n: int) -> np.ndarray:
    full = np.empty(n)
    full[:window - 1] = raw[0]
    full[window - 1:] = raw
    return full


def predict_state_detail(model, features: FeatureSeries) -> Prediction:
    m = _model_matrix(model, features)
    if isinstance(model, UngatedModel):
        codes = np.full(m.n_rows, -1, dtype=np.int8)
        raw = model.regressor.decision_values(m.values)
    else:
        codes = model.classifier.predict(m.values)
        raw = np.empty(m.n_rows)
        for code, region in enumerate(REGION_ORDER):
            mask = codes == code
            if not mask.any():
                continue
            cols = _region_columns(m.columns, region)
            raw[mask] = model.regressors[region].decision_values(
                m.values[np.ix_(mask, cols)])
    full = _backfill(np.clip(raw, -1.0, 1.0), model.window, features.n_frames)
    trace = AnnotationTrace(model.state, full, features.fps)
    return Prediction(trace=trace, raw=raw, regions=codes)


def predict_state(model, features: FeatureSeries) -> AnnotationTrace:
    """Predicted trace, full length: the first window-1 frames repeat
    the first windowed prediction."""
    return predict_state_detail(model, features).trace


# ---------------------------------------------------------------------------
# ungated variant (ablation baseline)


@dataclass(frozen=True)
class UngatedModel:
    """Single SVR over all kinds, no region routing."""

    state: State
    window: int
    deadband: float
    tau: float
    smooth: int
    fps: float
    weights: MicMatrix
    columns: tuple
    regressor: Regressor

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epistate-ungated v1\n")
            _write_common(self, fh)
            fh.write("svr,ALL\n")
            self.regressor.write(fh)
            fh.write("end\n")

    @classmethod
    def load(cls, path) -> "UngatedModel":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "epistate-ungated v1":
            raise BadFormat(f"not an ungated-model file: {path}")
        common, i = _parse_common(lines, 1)
        if lines[i] != "svr,ALL":
            raise BadFormat("missing svr section")
        regressor, i = Regressor.parse(lines, i + 1)
        if i >= len(lines) or lines[i] != "end":
            raise BadFormat("missing end marker")
        return cls(regressor=regressor, **common)


def train_ungated_model(sessions, state, cfg: StateModelConfig = StateModelConfig(),
                        jobs: int = 1, weights: MicMatrix = None) -> UngatedModel:
    """Ablation baseline: one SVR on all kinds, same weights pipeline."""
    sessions = list(sessions)
    if not sessions:
        raise EmptyInput("no training sessions")
    state = state if isinstance(state, State) else parse_state(state)
    if weights is None:
        weights = training_weights(sessions, state, cfg)
    stacked, _, targets = _gather_training(sessions, state, cfg, weights)
    regressor = train_svr(stacked.values, targets, cfg.svr)
    return UngatedModel(state=state, window=cfg.window_for(state),
                        deadband=cfg.deadband, tau=cfg.tau,
                        smooth=cfg.smooth_for(state),
                        fps=sessions[0].features.fps, weights=weights,
                        columns=stacked.columns, regressor=regressor)


def load_model(path):
    """Open either model flavour by sniffing the header line."""
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
    if head == "epistate-statemodel v1":
        return StateModel.load(path)
    if head == "epistate-ungated v1":
        return UngatedModel.load(path)
    raise BadFormat(f"unrecognised model header {head!r} in {path}")
