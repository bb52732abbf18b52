"""Dependence estimation: Pearson correlation and the maximal
information coefficient (MIC).

MIC scans grid shapes (cols, rows) with cols * rows <= B(n), where
B(n) = max(4, floor(n ** alpha)). For each shape, one axis is
equipartitioned into rows by rank and the other axis is partitioned by a
dynamic program that maximises empirical mutual information over column
counts 2..cols; both axis orientations are tried and the larger value
kept. Entries are normalised by log2(min(cols, rows)), so every entry
lies in [0, 1] and MIC is the maximum entry.

Everything here depends on the data only through rank order (ties kept
together, stable by original index), which makes the estimate invariant
under strictly increasing transforms of either variable. All entropies
are in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import CHANNELS, State
from .errors import (
    InputError,
    LengthMismatch,
    MissingWeight,
    TooFewPoints,
    ZeroVariance,
)
from .parallel import parallel_map

DEFAULT_ALPHA = 0.6
DEFAULT_CLUMPS = 15

MIN_POINTS = 4


def pearson(x, y) -> float:
    """Pearson correlation; raises ZeroVariance on a constant input."""
    x = _as_series(x)
    y = _as_series(y)
    if x.size != y.size:
        raise LengthMismatch(x.size, y.size)
    if x.size < 2:
        raise TooFewPoints(x.size, 2)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt(np.dot(xc, xc)))
    sy = float(np.sqrt(np.dot(yc, yc)))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVariance("pearson undefined for a constant series")
    r = float(np.dot(xc, yc) / (sx * sy))
    return min(1.0, max(-1.0, r))


def _as_series(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError("expected a one-dimensional series")
    if not np.all(np.isfinite(arr)):
        raise InputError("series contains non-finite values")
    return arr


@dataclass(frozen=True)
class MicParams:
    """Grid budget exponent alpha and clump factor c."""

    alpha: float = DEFAULT_ALPHA
    c: int = DEFAULT_CLUMPS

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise InputError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.c < 1:
            raise InputError(f"clump factor must be >= 1, got {self.c}")

    def budget(self, n: int) -> int:
        return max(4, int(math.floor(n ** self.alpha)))


# ---------------------------------------------------------------------------
# rank utilities

def _tie_starts(sorted_vals: np.ndarray) -> np.ndarray:
    """Start index of each run of equal values in an already sorted array."""
    if sorted_vals.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])


def _greedy_partition(sizes: np.ndarray, k: int) -> np.ndarray:
    """Assign consecutive groups to at most k bins, balancing point counts.

    A bin closes before the first group whose midpoint mass exceeds the
    adaptive target (remaining points / remaining bins); equivalently,
    adding that group would land further from the target than stopping.
    Groups are never split.
    """
    m = len(sizes)
    if k <= 1 or m <= 1:
        return np.zeros(m, dtype=np.int64)
    csz = np.cumsum(sizes, dtype=np.float64)
    mid = csz - np.asarray(sizes, dtype=np.float64) / 2.0
    total = float(csz[-1])
    out = np.empty(m, dtype=np.int64)
    a = 0
    b = 0
    consumed = 0.0
    while True:
        if b == k - 1:
            out[a:] = b
            break
        target = (total - consumed) / (k - b)
        e = int(np.searchsorted(mid, consumed + target, side="right"))
        e = max(e, a + 1)
        out[a:e] = b
        if e >= m:
            break
        consumed = float(csz[e - 1])
        a = e
        b += 1
    return out


def _equipartition(values: np.ndarray, k: int):
    """Rank-quantile assignment of points to at most k bins.

    Tied values always share a bin, which can merge quantile boundaries;
    the realised bin count is returned alongside the assignment.
    """
    order = np.argsort(values, kind="stable")
    starts = _tie_starts(values[order])
    sizes = np.diff(np.r_[starts, values.size])
    bins = _greedy_partition(sizes, k)
    assign = np.empty(values.size, dtype=np.int64)
    assign[order] = np.repeat(bins, sizes)
    return assign, int(bins[-1]) + 1


def _xlog2x(a: np.ndarray) -> np.ndarray:
    # x * log2(x) with the 0 * log(0) = 0 convention
    a = np.asarray(a, dtype=np.float64)
    return a * np.log2(np.where(a > 0, a, 1.0))


def _xlog2x_table(n: int) -> np.ndarray:
    # lookup of c * log2(c) for integer counts 0..n
    c = np.arange(n + 1, dtype=np.float64)
    return c * np.log2(np.where(c > 0, c, 1.0))


# ---------------------------------------------------------------------------
# column optimisation

def _clump_boundaries(order_starts: np.ndarray, rows_sorted: np.ndarray, n: int) -> np.ndarray:
    """Cumulative point counts at clump boundaries, in column-axis order.

    A clump is a maximal run of consecutive points (same column-axis tie
    structure) that fall in the same row. A tie group spanning several
    rows cannot be cut and forms a clump of its own.
    """
    gmin = np.minimum.reduceat(rows_sorted, order_starts)
    gmax = np.maximum.reduceat(rows_sorted, order_starts)
    labels = gmin.copy()
    mixed = gmin != gmax
    labels[mixed] = -1 - np.flatnonzero(mixed)  # unique, never merged
    sizes = np.diff(np.r_[order_starts, n])
    point_labels = np.repeat(labels, sizes)
    ends = np.flatnonzero(np.r_[point_labels[1:] != point_labels[:-1], True]) + 1
    return np.r_[0, ends].astype(np.int64)


def _row_cumulative(rows_sorted: np.ndarray, csum: np.ndarray, q: int) -> np.ndarray:
    one_hot = np.zeros((rows_sorted.size + 1, q), dtype=np.int64)
    one_hot[np.arange(rows_sorted.size) + 1, rows_sorted] = 1
    return np.cumsum(one_hot, axis=0)[csum]


def _last_column_entropy(csum, rowcum, xl: np.ndarray) -> np.ndarray:
    """G[s, t]: extensive row entropy (bits * points) of points in (s, t]."""
    k = csum.size - 1
    tot = csum[None, :] - csum[:, None]
    cnt = rowcum[None, :, :] - rowcum[:, None, :]
    np.abs(tot, out=tot)  # lower triangle is masked below, keep indices valid
    np.abs(cnt, out=cnt)
    G = xl[tot] - xl[cnt].sum(axis=2)
    idx = np.arange(k + 1)
    G[idx[:, None] >= idx[None, :]] = np.inf  # only s < t is a column
    return G


def _dp_columns(csum, rowcum, hq, max_cols, n, xl, want_parents=False):
    """Best mutual information for every column count 2..max_cols.

    E[t, l] is n_t * (H(P) - H(P, Q)) over partitions of the first t
    boundary segments into exactly l columns; appending a column only adds
    its own extensive row entropy, so E[t, l] = max_s E[s, l-1] - G[s, t].
    Returned values take the running maximum over smaller column counts
    (a grid may leave columns empty), so they are non-decreasing.
    """
    k = csum.size - 1
    ivals = np.zeros(max(max_cols - 1, 0), dtype=np.float64)
    parents = [] if want_parents else None
    if k < 1 or max_cols < 2:
        return ivals, parents, np.ones(max(max_cols - 1, 0), dtype=np.int64)
    G = _last_column_entropy(csum, rowcum, xl)
    E = -G[0, :].copy()  # l = 1
    M = np.empty_like(G)
    best = 0.0
    best_l = np.zeros(max_cols - 1, dtype=np.int64)  # exact l achieving each entry
    cur_l = 1
    for l in range(2, max_cols + 1):
        np.subtract(E[:, None], G, out=M)
        if want_parents:
            parents.append(np.argmax(M, axis=0))
        E = M.max(axis=0)
        exact = hq + E[k] / n if np.isfinite(E[k]) else -np.inf
        if exact > best:
            best = exact
            cur_l = l
        ivals[l - 2] = best
        best_l[l - 2] = cur_l
    return ivals, parents, best_l


def optimize_axis_partition(x, y, rows: int, max_cols: int,
                            c: int = DEFAULT_CLUMPS):
    """Optimise the x-axis partition against a rank equipartition of y.

    Returns (partitions, ivalues): for every column count l in
    2..max_cols, the best achievable mutual information (bits) using at
    most l columns with cuts on clump boundaries, and the cut positions
    (cumulative point counts in x-rank order) achieving it.
    """
    x = _as_series(x)
    y = _as_series(y)
    if x.size != y.size:
        raise LengthMismatch(x.size, y.size)
    n = x.size
    if n < MIN_POINTS:
        raise TooFewPoints(n, MIN_POINTS)
    if rows < 2:
        raise InputError(f"rows must be >= 2, got {rows}")
    if max_cols < 2:
        raise InputError(f"max_cols must be >= 2, got {max_cols}")
    if c < 1:
        raise InputError(f"clump factor must be >= 1, got {c}")

    assign, q = _equipartition(y, rows)
    counts = np.bincount(assign, minlength=q).astype(np.float64)
    hq = (_xlog2x(np.array([float(n)])) - _xlog2x(counts).sum()).item() / n

    order = np.argsort(x, kind="stable")
    rows_sorted = assign[order]
    starts = _tie_starts(x[order])
    csum = _clump_boundaries(starts, rows_sorted, n)
    if csum.size - 1 > c * max_cols:
        csum = _superclumps(csum, c * max_cols)
    rowcum = _row_cumulative(rows_sorted, csum, q)
    xl = _xlog2x_table(n)
    ivals, parents, best_l = _dp_columns(csum, rowcum, hq, max_cols, n, xl,
                                         want_parents=True)
    partitions = [_walk_parents(parents, csum, int(l), int(csum.size - 1))
                  for l in best_l]
    return partitions, ivals


def _superclumps(csum: np.ndarray, k_hat: int) -> np.ndarray:
    sizes = np.diff(csum)
    bins = _greedy_partition(sizes, k_hat)
    last = np.flatnonzero(np.r_[bins[1:] != bins[:-1], True])
    return np.r_[0, csum[1:][last]]


def _walk_parents(parents, csum, l_exact, k):
    if l_exact < 2 or k < 1:
        return (int(csum[-1]),)
    cuts = [k]
    t = k
    for lev in range(l_exact, 1, -1):
        t = int(parents[lev - 2][t])
        cuts.append(t)
    return tuple(int(csum[t]) for t in reversed(cuts))


# ---------------------------------------------------------------------------
# characteristic matrix and MIC

@dataclass(frozen=True)
class CharacteristicMatrix:
    """Normalised grid scores M(cols, rows) for every shape in budget."""

    n: int
    params: MicParams
    entries: dict

    def entry(self, cols: int, rows: int) -> float:
        try:
            return self.entries[(cols, rows)]
        except KeyError:
            raise InputError(f"grid ({cols}, {rows}) outside the budget") from None

    @property
    def mic(self) -> float:
        return max(self.entries.values())

    def shapes(self):
        return sorted(self.entries)


def _axis_profile(u: np.ndarray, v: np.ndarray, budget: int, c: int) -> dict:
    """I values with columns optimised on u and rows equipartitioned on v."""
    n = u.size
    out = {}
    order = np.argsort(u, kind="stable")
    u_sorted = u[order]
    starts = _tie_starts(u_sorted)
    order_v = np.argsort(v, kind="stable")
    starts_v = _tie_starts(v[order_v])
    sizes_v = np.diff(np.r_[starts_v, n])
    assign = np.empty(n, dtype=np.int64)
    xl = _xlog2x_table(n)
    for rows in range(2, budget // 2 + 1):
        max_cols = budget // rows
        if max_cols < 2:
            break
        bins = _greedy_partition(sizes_v, rows)
        assign[order_v] = np.repeat(bins, sizes_v)
        q = int(bins[-1]) + 1
        counts = np.bincount(assign, minlength=q).astype(np.float64)
        hq = (_xlog2x(np.array([float(n)])) - _xlog2x(counts).sum()).item() / n
        rows_sorted = assign[order]
        csum = _clump_boundaries(starts, rows_sorted, n)
        if csum.size - 1 > c * max_cols:
            csum = _superclumps(csum, c * max_cols)
        rowcum = _row_cumulative(rows_sorted, csum, q)
        ivals, _, _ = _dp_columns(csum, rowcum, hq, max_cols, n, xl)
        for l in range(2, max_cols + 1):
            out[(l, rows)] = ivals[l - 2]
    return out


def characteristic_matrix(x, y, params: MicParams = MicParams()) -> CharacteristicMatrix:
    x = _as_series(x)
    y = _as_series(y)
    if x.size != y.size:
        raise LengthMismatch(x.size, y.size)
    n = x.size
    if n < MIN_POINTS:
        raise TooFewPoints(n, MIN_POINTS)
    budget = params.budget(n)
    prof_xy = _axis_profile(x, y, budget, params.c)  # (xcols, yrows)
    prof_yx = _axis_profile(y, x, budget, params.c)  # (ycols, xrows)
    entries = {}
    for rows in range(2, budget // 2 + 1):
        for cols in range(2, budget // rows + 1):
            i_star = max(prof_xy.get((cols, rows), 0.0),
                         prof_yx.get((rows, cols), 0.0))
            m = i_star / math.log2(min(cols, rows))
            entries[(cols, rows)] = min(1.0, max(0.0, m))
    return CharacteristicMatrix(n=n, params=params, entries=entries)


def mic(x, y, params: MicParams = MicParams()) -> float:
    """Maximal information coefficient of two equal-length series."""
    return characteristic_matrix(x, y, params).mic


# ---------------------------------------------------------------------------
# score matrices

@dataclass(frozen=True)
class MicMatrix:
    """Score grid: rows are feature names, columns are state names."""

    features: tuple
    states: tuple
    scores: np.ndarray
    alpha: float = DEFAULT_ALPHA
    c: int = DEFAULT_CLUMPS

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.shape != (len(self.features), len(self.states)):
            raise InputError(f"score shape {scores.shape} does not match labels")
        scores.setflags(write=False)
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "scores", scores)

    def has(self, feature: str, state: str) -> bool:
        return feature in self.features and state in self.states

    def get(self, feature: str, state: str) -> float:
        if not self.has(feature, state):
            raise MissingWeight(feature, state)
        return float(self.scores[self.features.index(feature),
                                 self.states.index(state)])

    def top(self, state: str, k: int = 3):
        j = self.states.index(state)
        order = np.argsort(-self.scores[:, j], kind="stable")[:k]
        return [(self.features[i], float(self.scores[i, j])) for i in order]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("feature," + ",".join(self.states) + "\n")
            for i, name in enumerate(self.features):
                fh.write(name + "," + ",".join(
                    format(v, ".12g") for v in self.scores[i]) + "\n")

    @classmethod
    def from_csv(cls, path, alpha=DEFAULT_ALPHA, c=DEFAULT_CLUMPS) -> "MicMatrix":
        from .dataset import _read_rows
        rows = _read_rows(path)
        header = [h.strip() for h in rows[0]]
        if not header or header[0] != "feature":
            raise InputError(f"unrecognised score matrix header in {path}")
        states = tuple(header[1:])
        feats = []
        vals = []
        for row in rows[1:]:
            feats.append(row[0].strip())
            vals.append([float(v) for v in row[1:]])
        return cls(features=tuple(feats), states=states,
                   scores=np.array(vals, dtype=np.float64), alpha=alpha, c=c)

    def report(self) -> str:
        lines = [
            "# MIC ranking: top 3 features per state",
            f"# alpha={self.alpha:g} clumps={self.c}",
        ]
        for state in self.states:
            ranked = " ".join(f"{f}={v:.4f}" for f, v in self.top(state, 3))
            lines.append(f"{state}: {ranked}")
        return "\n".join(lines) + "\n"


def mic_matrix(features, traces, params: MicParams = MicParams(),
               jobs: int = 1) -> MicMatrix:
    """MIC of every channel against every state trace.

    The feature series and each trace must already be aligned to the same
    length (use dataset.align first).
    """
    traces = list(traces)
    if not traces:
        raise InputError("no traces given")
    for t in traces:
        if len(t) != features.n_frames:
            raise LengthMismatch(len(t), features.n_frames)
    states = tuple(str(t.state) for t in traces)
    if len(set(states)) != len(states):
        raise InputError("duplicate states among traces")

    tasks = [(features.data[:, i], t.values)
             for i in range(len(CHANNELS)) for t in traces]
    flat = parallel_map(lambda ab: mic(ab[0], ab[1], params), tasks, jobs)
    scores = np.array(flat, dtype=np.float64).reshape(len(CHANNELS), len(traces))
    return MicMatrix(features=CHANNELS, states=states, scores=scores,
                     alpha=params.alpha, c=params.c)


def emotion_mic_matrix(traces, params: MicParams = MicParams(),
                       jobs: int = 1) -> MicMatrix:
    """Pairwise MIC between state traces; square, symmetric, unit diagonal."""
    traces = list(traces)
    if len(traces) < 2:
        raise InputError("need at least two traces")
    n = len(traces[0])
    for t in traces[1:]:
        if len(t) != n:
            raise LengthMismatch(len(t), n)
    states = tuple(str(t.state) for t in traces)
    if len(set(states)) != len(states):
        raise InputError("duplicate states among traces")

    k = len(traces)
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    vals = parallel_map(
        lambda ij: mic(traces[ij[0]].values, traces[ij[1]].values, params),
        pairs, jobs)
    scores = np.eye(k, dtype=np.float64)
    for (i, j), v in zip(pairs, vals):
        scores[i, j] = v
        scores[j, i] = v
    return MicMatrix(features=states, states=states, scores=scores,
                     alpha=params.alpha, c=params.c)
