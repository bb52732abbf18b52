"""66-point facial landmarks to the 12 channel feature vector.

Channels 1-9 are distances between tracked landmark pairs divided by the
same distance measured on a fixed reference shape, so a frame identical
to the reference maps to 1.0 everywhere and the values are unitless.
Channels 10-12 copy the head pose angles through unchanged.

Landmark indexing follows the common 66-point markup: 0-16 jaw, 17-21
and 22-26 eyebrows, 27-35 nose, 36-41 and 42-47 eyes, 48-59 outer lip,
60-65 inner lip. The L/R suffix in channel names refers to the image
side (left brow = points 17-21), not the subject's own left.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .dataset import CHANNELS, FeatureSeries
from .errors import DegenerateShape, EmptyInput, InputError, MissingLandmark

N_LANDMARKS = 66
_ROW_WIDTH = 2 * N_LANDMARKS + 3

# landmark groups used by the distance channels
_LEFT_EYE = slice(36, 42)
_RIGHT_EYE = slice(42, 48)
_BROW_OUT_L, _BROW_IN_L = 17, 21
_BROW_IN_R, _BROW_OUT_R = 22, 26
_UPPER_LID_L, _LOWER_LID_L = (37, 38), (40, 41)
_UPPER_LID_R, _LOWER_LID_R = (43, 44), (46, 47)
_OUTER_TOP, _OUTER_BOT = 51, 57
_INNER_TOP, _INNER_BOT = 61, 64
_MOUTH_L, _MOUTH_R = 48, 54


@dataclass(frozen=True)
class LandmarkFrame:
    """One tracked frame: 66 (x, y) points plus yaw, pitch, roll."""

    points: np.ndarray
    pose: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        pose = np.asarray(self.pose, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise InputError(f"points must be ({N_LANDMARKS}, 2), got {pts.shape}")
        if pose.shape != (3,):
            raise InputError(f"pose must be (3,), got {pose.shape}")
        pts.setflags(write=False)
        pose.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "pose", pose)


def _dist(a, b) -> float:
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def _tracked_distances(points: np.ndarray) -> np.ndarray:
    """The 9 raw distances, in channel order."""
    eye_l = points[_LEFT_EYE].mean(axis=0)
    eye_r = points[_RIGHT_EYE].mean(axis=0)
    upper_l = points[list(_UPPER_LID_L)].mean(axis=0)
    lower_l = points[list(_LOWER_LID_L)].mean(axis=0)
    upper_r = points[list(_UPPER_LID_R)].mean(axis=0)
    lower_r = points[list(_LOWER_LID_R)].mean(axis=0)
    return np.array([
        _dist(points[_BROW_IN_L], eye_l),    # inBrL
        _dist(points[_BROW_IN_R], eye_r),    # inBrR
        _dist(points[_BROW_OUT_L], eye_l),   # otBrL
        _dist(points[_BROW_OUT_R], eye_r),   # otBrR
        _dist(upper_l, lower_l),             # eyeOL
        _dist(upper_r, lower_r),             # eyeOR
        _dist(points[_OUTER_TOP], points[_OUTER_BOT]),  # oLipH
        _dist(points[_INNER_TOP], points[_INNER_BOT]),  # iLipH
        _dist(points[_MOUTH_L], points[_MOUTH_R]),      # LpCDt
    ])


@dataclass(frozen=True)
class ReferenceShape:
    """Canonical neutral shape providing the distance denominators."""

    frame: LandmarkFrame
    distances: np.ndarray = None

    def __post_init__(self):
        d = _tracked_distances(self.frame.points)
        if not np.all(np.isfinite(d)) or np.any(d <= 0):
            raise DegenerateShape(detail="reference distances must be positive and finite")
        d.setflags(write=False)
        object.__setattr__(self, "distances", d)


def compute_features(frame: LandmarkFrame, ref: ReferenceShape) -> np.ndarray:
    """One frame to the 12 channel values (9 ratios, 3 pose angles)."""
    d = _tracked_distances(frame.points)
    if not np.all(np.isfinite(d)):
        raise DegenerateShape(detail="non-finite tracked distance")
    out = np.empty(len(CHANNELS), dtype=np.float64)
    out[:9] = d / ref.distances
    out[9:] = frame.pose
    if not np.all(np.isfinite(out)):
        raise DegenerateShape(detail="non-finite pose angle")
    return out


def extract_series(frames, ref: ReferenceShape, fps: float = 25.0) -> FeatureSeries:
    """Run compute_features over a frame sequence."""
    frames = list(frames)
    if not frames:
        raise EmptyInput("no landmark frames")
    data = np.empty((len(frames), len(CHANNELS)), dtype=np.float64)
    for i, frame in enumerate(frames):
        try:
            data[i] = compute_features(frame, ref)
        except DegenerateShape as exc:
            raise DegenerateShape(frame=i, detail=str(exc)) from None
    return FeatureSeries(data=data, fps=fps)


# ---------------------------------------------------------------------------
# Landmark CSV: x0,y0,...,x65,y65,yaw,pitch,roll per row


def _parse_landmark_row(cells, line) -> LandmarkFrame:
    if len(cells) != _ROW_WIDTH:
        raise MissingLandmark(line, len(cells), _ROW_WIDTH)
    try:
        vals = np.array([float(c) for c in cells], dtype=np.float64)
    except ValueError:
        raise InputError(f"non-numeric landmark cell at line {line}") from None
    return LandmarkFrame(points=vals[:2 * N_LANDMARKS].reshape(N_LANDMARKS, 2),
                         pose=vals[2 * N_LANDMARKS:])


def load_landmarks(path):
    """Read a landmark CSV; the x0,y0,... header row is optional."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    if not lines:
        raise EmptyInput(f"{path} is empty")
    start = 1 if lines[0].split(",")[0].strip() == "x0" else 0
    frames = [_parse_landmark_row([c.strip() for c in line.split(",")], ln)
              for ln, line in enumerate(lines[start:], start=start + 1)]
    if not frames:
        raise EmptyInput(f"{path} has no landmark rows")
    return frames


def landmark_header() -> str:
    cols = [f"{ax}{i}" for i in range(N_LANDMARKS) for ax in ("x", "y")]
    return ",".join(cols + ["yaw", "pitch", "roll"])


def load_reference_shape(path=None) -> ReferenceShape:
    """Load a reference shape CSV; defaults to the packaged neutral face."""
    if path is None:
        with resources.as_file(
                resources.files("epistate").joinpath("data/reference_shape.csv")) as p:
            frames = load_landmarks(p)
    else:
        frames = load_landmarks(path)
    if len(frames) != 1:
        raise InputError("reference shape file must contain exactly one row")
    return ReferenceShape(frame=frames[0])
