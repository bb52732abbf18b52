"""Sliding-window temporal features and the design matrix.

A window of w frames slides right one frame at a time, so a series of n
frames yields n - w + 1 rows, each aligned to its window-end frame.
Velocity is the endpoint difference over the window divided by the
elapsed time (w - 1 frames at the series rate, in seconds). Events are
the velocity sign with a symmetric deadband: |v| <= deadband maps to 0,
and the boundary value itself is inside the band.

Design matrix column kinds, in fixed order:
  i    original channel value at the window-end frame
  ii   velocity
  iii  event (ternary -1, 0, +1)
  iv   event * velocity (|v| outside the deadband, 0 inside)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CHANNELS, FeatureSeries
from .errors import (
    EmptyKinds,
    InputError,
    LengthMismatch,
    MissingWeight,
    WindowTooLarge,
)

KINDS = ("i", "ii", "iii", "iv")

DEFAULT_DEADBAND = 0.01


@dataclass(frozen=True)
class WindowConfig:
    """Window size in frames and the event deadband in units per second."""

    size: int
    deadband: float = DEFAULT_DEADBAND

    def __post_init__(self):
        if self.size < 2:
            raise InputError(f"window size must be >= 2, got {self.size}")
        if not (self.deadband >= 0):
            raise InputError(f"deadband must be >= 0, got {self.deadband}")


def _check_window(n: int, size: int) -> None:
    if size > n:
        raise WindowTooLarge(size, n)


def velocity(series: FeatureSeries, window: WindowConfig) -> np.ndarray:
    """Endpoint slope of each window, units per second, one row per window."""
    w = window.size
    _check_window(series.n_frames, w)
    dt = (w - 1) / series.fps
    return (series.data[w - 1:] - series.data[:series.n_frames - w + 1]) / dt


def events(series: FeatureSeries, window: WindowConfig) -> np.ndarray:
    """Ternary movement direction per window: sign(velocity) with a deadband."""
    v = velocity(series, window)
    return np.where(np.abs(v) <= window.deadband, 0.0, np.sign(v))


def event_velocity(series: FeatureSeries, window: WindowConfig) -> np.ndarray:
    """events * velocity: |velocity| outside the deadband, 0 inside."""
    v = velocity(series, window)
    return np.where(np.abs(v) <= window.deadband, 0.0, np.sign(v)) * v


_KIND_FN = {
    "i": lambda s, w: s.data[w.size - 1:],
    "ii": velocity,
    "iii": events,
    "iv": event_velocity,
}


@dataclass(frozen=True)
class DesignMatrix:
    """Stacked feature blocks; every column is tagged (channel, kind)."""

    values: np.ndarray
    columns: tuple  # of (channel, kind) pairs
    window: int
    fps: float
    deadband: float = DEFAULT_DEADBAND
    weighted: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        cols = tuple((str(c), str(k)) for c, k in self.columns)
        if vals.ndim != 2 or vals.shape[1] != len(cols):
            raise InputError(f"values shape {vals.shape} does not match {len(cols)} columns")
        if len(set(cols)) != len(cols):
            raise InputError("duplicate (channel, kind) column tags")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "columns", cols)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def kinds(self) -> tuple:
        seen = []
        for _, k in self.columns:
            if k not in seen:
                seen.append(k)
        return tuple(seen)

    def kind_mask(self, kinds) -> np.ndarray:
        """Boolean column selector for a subset of kinds."""
        kinds = set(kinds)
        return np.array([k in kinds for _, k in self.columns])

    def to_csv(self, path) -> None:
        """Two header rows (channels, kinds), then data."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(c for c, _ in self.columns) + "\n")
            fh.write(",".join(k for _, k in self.columns) + "\n")
            for row in self.values:
                fh.write(",".join(format(v, ".12g") for v in row) + "\n")


def build_design_matrix(series: FeatureSeries, window: WindowConfig,
                        kinds=KINDS) -> DesignMatrix:
    """Concatenate the requested feature kinds into one matrix.

    Kinds are deduplicated and laid out in canonical order (i, ii, iii, iv)
    regardless of the order given. Within a kind, columns follow the
    canonical channel order.
    """
    kinds = list(kinds)
    if not kinds:
        raise EmptyKinds("at least one feature kind is required")
    for k in kinds:
        if k not in KINDS:
            raise InputError(f"unknown feature kind {k!r}; expected subset of {KINDS}")
    ordered = [k for k in KINDS if k in kinds]
    _check_window(series.n_frames, window.size)
    blocks = [_KIND_FN[k](series, window) for k in ordered]
    tags = [(ch, k) for k in ordered for ch in CHANNELS]
    return DesignMatrix(
        values=np.hstack(blocks),
        columns=tags,
        window=window.size,
        fps=series.fps,
        deadband=window.deadband,
    )


def velocity_feature_name(channel: str) -> str:
    """Score-matrix row name for a channel's velocity series."""
    return f"{channel}_vel"


def weight_features(m: DesignMatrix, weights, state) -> DesignMatrix:
    """Scale columns by MIC scores against the target state.

    Original columns (kind i) are scaled by the channel's own score. The
    derived kinds (ii, iii, iv) describe a channel-velocity pair, which a
    bivariate score cannot rate directly, so they inherit
    max(channel score, velocity-series score) with the velocity score
    taken from the row named by velocity_feature_name when present.
    """
    if m.weighted:
        raise InputError("design matrix is already weighted")
    state = str(state)
    scale = np.empty(m.n_cols, dtype=np.float64)
    for j, (ch, kind) in enumerate(m.columns):
        if not weights.has(ch, state):
            raise MissingWeight(ch, state)
        w = weights.get(ch, state)
        if kind != "i":
            vel = velocity_feature_name(ch)
            if weights.has(vel, state):
                w = max(w, weights.get(vel, state))
        scale[j] = w
    return DesignMatrix(
        values=m.values * scale[None, :],
        columns=m.columns,
        window=m.window,
        fps=m.fps,
        deadband=m.deadband,
        weighted=True,
    )


def targets_for_windows(trace_values: np.ndarray, window: int) -> np.ndarray:
    """Trace values at window-end frames, aligned to design-matrix rows."""
    n = len(trace_values)
    if window > n:
        raise WindowTooLarge(window, n)
    return np.asarray(trace_values, dtype=np.float64)[window - 1:]


def check_aligned(m: DesignMatrix, other_len: int) -> None:
    if m.n_rows != other_len:
        raise LengthMismatch(m.n_rows, other_len)
