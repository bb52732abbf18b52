"""Session data model and I/O.

A session pairs a 12-channel facial feature series with one or more
continuous annotation traces (one per epistemic state, values in
[-1, +1]). Synthetic sessions with planted region structure and
channel couplings are generated here too; they double as the ground
truth oracle for the evaluation suite.
"""

from __future__ import annotations

import enum
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyFile,
    IncompatibleRates,
    InputError,
    InvalidPlan,
    LengthMismatch,
    MalformedRow,
    MissingChannel,
    OutOfRange,
    TooShort,
)

# Canonical channel order. Columns 0-8 are scale-normalised distances,
# columns 9-11 are head pose angles.
CHANNELS = (
    "inBrL", "inBrR", "otBrL", "otBrR",
    "eyeOL", "eyeOR", "oLipH", "iLipH",
    "LpCDt", "Yaw", "Pitch", "Roll",
)

N_CHANNELS = len(CHANNELS)

# Loader tolerance: ratings outside [-1, +1] by more than this are errors,
# anything closer is clipped.
CLIP_TOL = 1e-6


class State(enum.Enum):
    AGREEMENT = "Agreement"
    CONCENTRATION = "Concentration"
    THOUGHTFUL = "Thoughtful"
    CERTAIN = "Certain"
    INTEREST = "Interest"

    def __str__(self):
        return self.value


#: Default analysis window (frames) per state.
DEFAULT_WINDOWS = {
    State.AGREEMENT: 20,
    State.CONCENTRATION: 40,
    State.THOUGHTFUL: 20,
    State.CERTAIN: 40,
    State.INTEREST: 40,
}


def parse_state(name: str) -> State:
    for s in State:
        if s.value.lower() == str(name).strip().lower():
            return s
    raise InputError(f"unknown state {name!r}; expected one of "
                     + ", ".join(s.value for s in State))


class RegionLabel(enum.Enum):
    RISE = "RISE"
    SUSTAIN = "SUSTAIN"
    DECAY = "DECAY"

    def __str__(self):
        return self.value


#: Canonical class order used for label codes and classifier outputs.
REGION_ORDER = (RegionLabel.RISE, RegionLabel.SUSTAIN, RegionLabel.DECAY)
_REGION_CODE = {lab: i for i, lab in enumerate(REGION_ORDER)}


def parse_region(name: str) -> RegionLabel:
    try:
        return RegionLabel(str(name).strip().upper())
    except ValueError:
        raise InputError(f"unknown region label {name!r}") from None


@dataclass(frozen=True)
class RegionLabels:
    """Per-frame ternary region labels, stored as int8 codes."""

    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int8)
        if codes.ndim != 1:
            raise InputError("region codes must be one-dimensional")
        if codes.size and (codes.min() < 0 or codes.max() >= len(REGION_ORDER)):
            raise InputError("region codes outside the ternary label set")
        codes.setflags(write=False)
        object.__setattr__(self, "codes", codes)

    @classmethod
    def from_labels(cls, labels) -> "RegionLabels":
        return cls(np.array([_REGION_CODE[lab] for lab in labels], dtype=np.int8))

    def __len__(self):
        return self.codes.size

    def label(self, i: int) -> RegionLabel:
        return REGION_ORDER[int(self.codes[i])]

    def to_labels(self):
        return [REGION_ORDER[c] for c in self.codes]

    def for_window(self, window: int) -> "RegionLabels":
        """Slice to window-end frames so labels pair with design-matrix rows."""
        if window < 1 or window > self.codes.size:
            raise InputError(f"window {window} incompatible with {self.codes.size} labels")
        return RegionLabels(self.codes[window - 1:])

    def counts(self) -> dict:
        return {lab: int(np.sum(self.codes == code))
                for lab, code in _REGION_CODE.items()}


@dataclass(frozen=True)
class FeatureSeries:
    """Frame-aligned matrix of the 12 facial channels at a fixed rate."""

    data: np.ndarray
    fps: float
    channels: tuple = CHANNELS

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != N_CHANNELS:
            raise InputError(f"feature data must be (n, {N_CHANNELS}), got {data.shape}")
        if data.shape[0] < 1:
            raise InputError("feature series needs at least one frame")
        if not np.all(np.isfinite(data)):
            raise InputError("feature series contains non-finite values after ingestion")
        if tuple(self.channels) != CHANNELS:
            raise MissingChannel(
                next((c for c in CHANNELS if c not in self.channels), str(self.channels)))
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InputError(f"fps must be a positive finite number, got {self.fps}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", CHANNELS)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def column(self, channel: str) -> np.ndarray:
        try:
            return self.data[:, CHANNELS.index(channel)]
        except ValueError:
            raise MissingChannel(channel) from None


@dataclass(frozen=True)
class AnnotationTrace:
    """Continuous rating of one epistemic state, values in [-1, +1]."""

    state: State
    values: np.ndarray
    fps: float

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise InputError("trace values must be one-dimensional")
        if vals.size < 2:
            raise TooShort(f"trace needs at least 2 frames, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise InputError("trace contains non-finite values")
        over = np.abs(vals) > 1.0 + CLIP_TOL
        if np.any(over):
            i = int(np.argmax(over))
            raise OutOfRange(i, float(vals[i]))
        vals = np.clip(vals, -1.0, 1.0)
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InputError(f"fps must be a positive finite number, got {self.fps}")
        if not isinstance(self.state, State):
            object.__setattr__(self, "state", parse_state(self.state))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class Session:
    """One recording: features plus aligned traces, optional region truth."""

    session_id: str
    features: FeatureSeries
    traces: dict
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.features.n_frames
        for state, trace in self.traces.items():
            if not isinstance(state, State):
                raise InputError(f"trace key {state!r} is not a State")
            if len(trace) != n:
                raise LengthMismatch(len(trace), n)
            if trace.fps != self.features.fps:
                raise IncompatibleRates(trace.fps, self.features.fps)
        for state, labels in self.regions.items():
            if len(labels) != n:
                raise LengthMismatch(len(labels), n)

    @property
    def n_frames(self) -> int:
        return self.features.n_frames

    def trace(self, state: State) -> AnnotationTrace:
        if state not in self.traces:
            raise InputError(f"session {self.session_id!r} has no trace for {state}")
        return self.traces[state]


# ---------------------------------------------------------------------------
# CSV I/O


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def _read_rows(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    rows = [line.split(",") for line in text.splitlines() if line.strip() != ""]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    return rows


def load_feature_series(path, fps: float = 25.0) -> FeatureSeries:
    """Read a feature CSV.

    The header must contain every canonical channel; column order is free
    and an optional leading frame column is accepted if monotone. Blank or
    non-finite cells are treated as tracking gaps and imputed by linear
    interpolation (nearest valid value at the boundaries).
    """
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    has_frame = bool(header) and header[0] == "frame"
    names = header[1:] if has_frame else header
    if len(set(names)) != len(names):
        raise InputError(f"duplicate column in header of {path}")
    for ch in CHANNELS:
        if ch not in names:
            raise MissingChannel(ch)
    for name in names:
        if name not in CHANNELS:
            raise InputError(f"unknown column {name!r} in {path}")
    if len(rows) == 1:
        raise EmptyFile(f"{path} has a header but no data rows")

    ncol = len(header)
    data = np.empty((len(rows) - 1, len(names)), dtype=np.float64)
    frames = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != ncol:
            raise MalformedRow(r, f"expected {ncol} cells, got {len(row)}")
        cells = [c.strip() for c in row]
        if has_frame:
            try:
                frames.append(float(cells[0]))
            except ValueError:
                raise MalformedRow(r, f"bad frame index {cells[0]!r}") from None
            cells = cells[1:]
        for j, cell in enumerate(cells):
            if cell == "":
                data[r - 2, j] = np.nan
                continue
            try:
                data[r - 2, j] = float(cell)
            except ValueError:
                raise MalformedRow(r, f"cannot parse {cell!r}") from None
    if has_frame and np.any(np.diff(np.asarray(frames)) < 0):
        bad = int(np.argmax(np.diff(np.asarray(frames)) < 0)) + 3
        raise MalformedRow(bad, "frame index is not monotone")

    # reorder to canonical layout, then impute gaps column by column
    order = [names.index(ch) for ch in CHANNELS]
    data = data[:, order]
    data = _impute_gaps(data)
    return FeatureSeries(data=data, fps=fps)


def _impute_gaps(data: np.ndarray) -> np.ndarray:
    """Linear interpolation over non-finite runs; boundaries take the nearest valid value."""
    out = np.array(data, dtype=np.float64)
    n = out.shape[0]
    idx = np.arange(n)
    for j in range(out.shape[1]):
        col = out[:, j]
        good = np.isfinite(col)
        if good.all():
            continue
        if not good.any():
            raise InputError(f"channel {CHANNELS[j]!r} has no finite samples")
        out[:, j] = np.interp(idx, idx[good], col[good])
    return out


def write_feature_series(series: FeatureSeries, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame," + ",".join(CHANNELS) + "\n")
        for i, row in enumerate(series.data):
            fh.write(str(i) + "," + ",".join(_fmt(v) for v in row) + "\n")


def load_annotation_trace(path, state, fps: float = 25.0) -> AnnotationTrace:
    """Read a trace CSV with header ``frame,rating`` or a single ``rating`` column."""
    if not isinstance(state, State):
        state = parse_state(state)
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if header == ["frame", "rating"]:
        col = 1
    elif header == ["rating"]:
        col = 0
    else:
        raise InputError(f"unrecognised trace header {header!r} in {path}")
    if len(rows) == 1:
        raise EmptyFile(f"{path} has a header but no data rows")
    vals = np.empty(len(rows) - 1, dtype=np.float64)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise MalformedRow(r, f"expected {len(header)} cells, got {len(row)}")
        try:
            v = float(row[col])
        except ValueError:
            raise MalformedRow(r, f"cannot parse {row[col]!r}") from None
        if abs(v) > 1.0 + CLIP_TOL:
            raise OutOfRange(r - 2, v)
        vals[r - 2] = v
    return AnnotationTrace(state=state, values=np.clip(vals, -1.0, 1.0), fps=fps)


def write_annotation_trace(trace: AnnotationTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,rating\n")
        for i, v in enumerate(trace.values):
            fh.write(f"{i},{_fmt(v)}\n")


def load_region_labels(path) -> RegionLabels:
    rows = _read_rows(path)
    if [h.strip() for h in rows[0]] != ["frame", "region"]:
        raise InputError(f"unrecognised regions header in {path}")
    labs = [parse_region(row[1]) for row in rows[1:]]
    if not labs:
        raise EmptyFile(f"{path} has a header but no data rows")
    return RegionLabels.from_labels(labs)


def write_region_labels(labels: RegionLabels, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame,region\n")
        for i in range(len(labels)):
            fh.write(f"{i},{labels.label(i).value}\n")


# ---------------------------------------------------------------------------
# Alignment


def resample_trace(trace: AnnotationTrace, fps: float) -> AnnotationTrace:
    """Linearly resample a trace to a new frame rate."""
    if fps == trace.fps:
        return trace
    ratio = fps / trace.fps
    if not (math.isfinite(ratio) and ratio > 0):
        raise IncompatibleRates(trace.fps, fps)
    n = len(trace)
    target = int(round(n * ratio))
    if target < 2:
        raise IncompatibleRates(trace.fps, fps)
    # position of target frame j on the source index axis
    pos = np.arange(target) / ratio
    vals = np.interp(pos, np.arange(n), trace.values)
    return AnnotationTrace(state=trace.state, values=vals, fps=fps)


def align(features: FeatureSeries, trace: AnnotationTrace):
    """Bring a feature series and a trace to a common rate and length.

    The trace is resampled to the feature rate when the rates differ, then
    both are truncated to the shorter length. Applying align twice is a
    no-op.
    """
    trace = resample_trace(trace, features.fps)
    n = min(features.n_frames, len(trace))
    if n < 2:
        raise TooShort("aligned overlap shorter than 2 frames")
    f = features if features.n_frames == n else FeatureSeries(
        data=features.data[:n], fps=features.fps)
    t = trace if len(trace) == n else AnnotationTrace(
        state=trace.state, values=trace.values[:n], fps=trace.fps)
    return f, t


# ---------------------------------------------------------------------------
# Synthetic sessions

COUPLING_KINDS = ("linear", "quadratic", "sinusoidal", "independent")


@dataclass(frozen=True)
class Segment:
    """One planned region: kind, duration in frames, slope per frame."""

    kind: RegionLabel
    frames: int
    slope: float = 0.0


@dataclass(frozen=True)
class Coupling:
    """How one channel follows the latent rating."""

    kind: str = "independent"
    scale: float = 1.0
    offset: float = 0.0
    freq: float = 1.0

    def __post_init__(self):
        if self.kind not in COUPLING_KINDS:
            raise InvalidPlan(f"unknown coupling kind {self.kind!r}")

    def apply(self, rating: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.scale * rating + self.offset
        if self.kind == "quadratic":
            return self.scale * rating ** 2 + self.offset
        if self.kind == "sinusoidal":
            return self.scale * np.sin(2.0 * np.pi * self.freq * rating) + self.offset
        return np.zeros_like(rating)


@dataclass(frozen=True)
class SynthConfig:
    """Plan for one synthetic session.

    n_frames: total length, at least 100.
    plan: list of Segments; durations must sum to n_frames.
    couplings: channel name -> Coupling; unlisted channels are pure noise.
    sigma: noise level applied to the emitted trace and to every channel.
    trace_sigma: separate trace noise level; negative means "use sigma".
    start: latent rating at frame 0.
    """

    n_frames: int
    plan: tuple
    couplings: dict = field(default_factory=dict)
    fps: float = 25.0
    sigma: float = 0.0
    trace_sigma: float = -1.0
    start: float = 0.0
    seed: int = 0
    state: State = State.CONCENTRATION
    session_id: str = ""

    def __post_init__(self):
        if self.n_frames < 100:
            raise InvalidPlan(f"n_frames must be >= 100, got {self.n_frames}")
        if not (self.fps > 0 and math.isfinite(self.fps)):
            raise InvalidPlan(f"bad fps {self.fps}")
        if self.sigma < 0:
            raise InvalidPlan(f"sigma must be >= 0, got {self.sigma}")
        plan = tuple(self.plan)
        if not plan:
            raise InvalidPlan("plan is empty")
        for seg in plan:
            if not isinstance(seg, Segment):
                raise InvalidPlan(f"plan entries must be Segment, got {seg!r}")
            if seg.frames < 1:
                raise InvalidPlan(f"segment duration must be >= 1, got {seg.frames}")
        total = sum(seg.frames for seg in plan)
        if total != self.n_frames:
            raise InvalidPlan(
                f"plan durations sum to {total}, expected n_frames={self.n_frames}")
        for ch in self.couplings:
            if ch not in CHANNELS:
                raise InvalidPlan(f"coupling names unknown channel {ch!r}")
        object.__setattr__(self, "plan", plan)


def synth_session(cfg: SynthConfig) -> Session:
    """Generate one session from a segment plan.

    The latent rating starts at cfg.start and moves by each segment's
    slope per frame, clipped to [-1, +1]. Coupled channels are noisy
    functions of the clipped latent; independent channels are pure noise.
    The emitted trace is the clipped latent plus noise, and the planted
    region labels are carried unchanged as ground truth.
    """
    n = cfg.n_frames
    inc = np.zeros(n, dtype=np.float64)
    codes = np.empty(n, dtype=np.int8)
    t = 0
    for seg in cfg.plan:
        inc[t:t + seg.frames] = seg.slope
        codes[t:t + seg.frames] = _REGION_CODE[seg.kind]
        t += seg.frames
    inc[0] = 0.0
    latent = np.clip(cfg.start + np.cumsum(inc), -1.0, 1.0)

    rng = np.random.default_rng(cfg.seed)
    tsig = cfg.trace_sigma if cfg.trace_sigma >= 0 else cfg.sigma
    trace_vals = np.clip(latent + rng.normal(0.0, tsig, n), -1.0, 1.0)
    data = np.empty((n, N_CHANNELS), dtype=np.float64)
    for j, ch in enumerate(CHANNELS):
        noise = rng.normal(0.0, cfg.sigma, n)
        coupling = cfg.couplings.get(ch, Coupling())
        data[:, j] = coupling.apply(latent) + noise

    sid = cfg.session_id or f"synth{cfg.seed:04d}"
    features = FeatureSeries(data=data, fps=cfg.fps)
    trace = AnnotationTrace(state=cfg.state, values=trace_vals, fps=cfg.fps)
    return Session(
        session_id=sid,
        features=features,
        traces={cfg.state: trace},
        regions={cfg.state: RegionLabels(codes)},
    )


# ---------------------------------------------------------------------------
# Synthetic session manifest (key=value text) and session directories

_MANIFEST_KEYS = {"n_frames", "fps", "seed", "state", "sigma", "trace_sigma",
                  "start", "id", "plan"}


def parse_synth_manifest(path) -> SynthConfig:
    """Parse a key=value manifest describing one synthetic session.

    Recognised keys: n_frames, fps, seed, state, sigma, trace_sigma,
    start, id, plan, and couple.<Channel>. Unknown keys are rejected.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    kv = {}
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise MalformedRow(ln, "expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in kv:
            raise InputError(f"duplicate manifest key {key!r}")
        kv[key] = value.strip()

    couplings = {}
    plain = {}
    for key, value in kv.items():
        if key.startswith("couple."):
            ch = key[len("couple."):]
            couplings[ch] = _parse_coupling(value)
        elif key in _MANIFEST_KEYS:
            plain[key] = value
        else:
            raise InputError(f"unknown manifest key {key!r}")
    if "n_frames" not in plain or "plan" not in plain:
        raise InputError("manifest must set n_frames and plan")

    try:
        cfg = SynthConfig(
            n_frames=int(plain["n_frames"]),
            plan=_parse_plan(plain["plan"]),
            couplings=couplings,
            fps=float(plain.get("fps", 25.0)),
            sigma=float(plain.get("sigma", 0.0)),
            trace_sigma=float(plain.get("trace_sigma", -1.0)),
            start=float(plain.get("start", 0.0)),
            seed=int(plain.get("seed", 0)),
            state=parse_state(plain.get("state", "Concentration")),
            session_id=plain.get("id", ""),
        )
    except ValueError as exc:
        raise InputError(f"bad manifest value: {exc}") from None
    return cfg


def _parse_plan(text: str):
    segments = []
    for part in text.split(","):
        bits = part.strip().split(":")
        if len(bits) not in (2, 3):
            raise InvalidPlan(f"plan segment {part!r} is not KIND:frames[:slope]")
        try:
            frames = int(bits[1])
            slope = float(bits[2]) if len(bits) == 3 else 0.0
        except ValueError:
            raise InvalidPlan(f"plan segment {part!r} has a bad number") from None
        segments.append(Segment(kind=parse_region(bits[0]), frames=frames, slope=slope))
    return tuple(segments)


def _parse_coupling(text: str) -> Coupling:
    bits = [b.strip() for b in text.split(":")]
    kind = bits[0]
    try:
        scale = float(bits[1]) if len(bits) > 1 else 1.0
        offset = float(bits[2]) if len(bits) > 2 else 0.0
        freq = float(bits[3]) if len(bits) > 3 else 1.0
    except ValueError:
        raise InvalidPlan(f"bad coupling spec {text!r}") from None
    if len(bits) > 4:
        raise InvalidPlan(f"bad coupling spec {text!r}")
    return Coupling(kind=kind, scale=scale, offset=offset, freq=freq)


def write_session(session: Session, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_feature_series(session.features, os.path.join(out_dir, "features.csv"))
    for state, trace in session.traces.items():
        write_annotation_trace(trace, os.path.join(out_dir, f"trace_{state.value}.csv"))
    if len(session.regions) == 1:
        (labels,) = session.regions.values()
        write_region_labels(labels, os.path.join(out_dir, "regions.csv"))
    else:
        for state, labels in session.regions.items():
            write_region_labels(labels, os.path.join(out_dir, f"regions_{state.value}.csv"))


def load_session(session_dir, fps: float = 25.0) -> Session:
    """Load a session directory: features.csv plus trace_<State>.csv files."""
    fpath = os.path.join(session_dir, "features.csv")
    if not os.path.exists(fpath):
        raise InputError(f"{session_dir} has no features.csv")
    features = load_feature_series(fpath, fps=fps)

    traces = {}
    for name in sorted(os.listdir(session_dir)):
        m = re.fullmatch(r"trace_(.+)\.csv", name)
        if m:
            state = parse_state(m.group(1))
            traces[state] = load_annotation_trace(
                os.path.join(session_dir, name), state, fps=fps)
    if not traces:
        raise InputError(f"{session_dir} has no trace_<State>.csv files")

    resampled = {s: resample_trace(t, features.fps) for s, t in traces.items()}
    n = min([features.n_frames] + [len(t) for t in resampled.values()])
    if n < 2:
        raise TooShort("aligned overlap shorter than 2 frames")
    feats = features if features.n_frames == n else FeatureSeries(
        data=features.data[:n], fps=features.fps)
    traces = {
        s: (t if len(t) == n else AnnotationTrace(state=s, values=t.values[:n], fps=t.fps))
        for s, t in resampled.items()
    }

    regions = {}
    rpath = os.path.join(session_dir, "regions.csv")
    if os.path.exists(rpath):
        if len(traces) != 1:
            raise InputError("regions.csv is ambiguous with multiple traces")
        (state,) = traces.keys()
        labels = load_region_labels(rpath)
        if len(labels) >= n:
            regions[state] = RegionLabels(labels.codes[:n])
    for name in sorted(os.listdir(session_dir)):
        m = re.fullmatch(r"regions_(.+)\.csv", name)
        if m:
            state = parse_state(m.group(1))
            labels = load_region_labels(os.path.join(session_dir, name))
            if len(labels) >= n:
                regions[state] = RegionLabels(labels.codes[:n])

    sid = os.path.basename(os.path.normpath(session_dir))
    return Session(session_id=sid, features=feats, traces=traces, regions=regions)
