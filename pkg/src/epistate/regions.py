"""Region labelling and the ternary region classifier.

Labels come from the smoothed slope of an annotation trace: frames with
slope above +tau are RISE, below -tau DECAY, everything between SUSTAIN.
The classifier is a bagged forest of depth-limited decision trees that
vote on the region of each design-matrix row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import REGION_ORDER, AnnotationTrace, RegionLabel, RegionLabels
from .errors import (
    ArityMismatch,
    BadFormat,
    InputError,
    LengthMismatch,
    MissingClass,
    SingleClass,
    TooFewRows,
    TooShort,
)
from .parallel import parallel_map

DEFAULT_TAU = 0.005
N_CLASSES = len(REGION_ORDER)


def _moving_average(values: np.ndarray, half: int) -> np.ndarray:
    """Centered mean over [t-half, t+half], window shrinking at the edges."""
    if half <= 0:
        return values
    n = values.size
    csum = np.concatenate(([0.0], np.cumsum(values)))
    lo = np.maximum(np.arange(n) - half, 0)
    hi = np.minimum(np.arange(n) + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _trace_values(trace, fps):
    if isinstance(trace, AnnotationTrace):
        return trace.values, trace.fps
    if fps is None:
        raise InputError("fps is required when the trace is a bare array")
    return np.asarray(trace, dtype=np.float64), float(fps)


def trace_slope(trace, smooth: int = 2, fps=None) -> np.ndarray:
    """Per-frame slope of a trace in rating units per second.

    Central difference on the moving-average-smoothed series, one-sided
    at the two ends. `smooth` is the averaging window in frames.
    """
    values, fps = _trace_values(trace, fps)
    if values.ndim != 1:
        raise InputError("trace must be one-dimensional")
    if smooth < 2:
        raise InputError(f"smooth must be >= 2 frames, got {smooth}")
    if values.size < smooth:
        raise TooShort(f"trace of {values.size} frames shorter than smooth={smooth}")
    if not (fps > 0):
        raise InputError(f"fps must be positive, got {fps}")
    sm = _moving_average(values, smooth // 2)
    slope = np.empty_like(sm)
    slope[1:-1] = (sm[2:] - sm[:-2]) / 2.0
    slope[0] = sm[1] - sm[0]
    slope[-1] = sm[-1] - sm[-2]
    return slope * fps


def label_regions(trace, smooth: int = 2, tau: float = DEFAULT_TAU,
                  fps=None) -> RegionLabels:
    """Ternary slope threshold: RISE above +tau, DECAY below -tau.

    Accepts an AnnotationTrace or a bare value array plus fps. Frames
    within about +-smooth of a slope change can take either adjacent
    label; callers scoring against a plan should exclude that band.
    """
    if not (tau > 0):
        raise InputError(f"tau must be > 0, got {tau}")
    slope = trace_slope(trace, smooth, fps)
    codes = np.ones(slope.size, dtype=np.int8)  # SUSTAIN
    codes[slope > tau] = 0   # RISE
    codes[slope < -tau] = 2  # DECAY
    return RegionLabels(codes)


# ---------------------------------------------------------------------------
# random forest


@dataclass(frozen=True)
class ForestParams:
    """Forest size and split policy. features_per_split 0 means ceil(sqrt(d))."""

    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int = 0
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth < 1:
            raise InputError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise InputError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.features_per_split < 0:
            raise InputError("features_per_split must be >= 0")

    def mtry(self, d: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(d))
        return max(1, min(k, d))


class _Tree:
    """Flat-array decision tree.

    Leaves have feature == -1; every node keeps the class counts of its
    training rows, and a leaf predicts the argmax of its counts (ties
    break toward the lower class code).
    """

    __slots__ = ("feature", "threshold", "left", "right", "counts", "leaf_class")

    def __init__(self, feature, threshold, left, right, counts):
        self.feature = np.asarray(feature, dtype=np.int32)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int32)
        self.right = np.asarray(right, dtype=np.int32)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, N_CLASSES)
        self.leaf_class = np.argmax(self.counts, axis=1).astype(np.int8)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf class per row, all rows walked one level per pass."""
        node = np.zeros(x.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            live = feat >= 0
            if not live.any():
                return self.leaf_class[node]
            rows = np.nonzero(live)[0]
            cur = node[rows]
            go_left = x[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])


def _best_split(x, y, idx, feats, min_leaf):
    """Lowest weighted Gini split over the candidate features.

    Returns (feature, threshold, left_idx, right_idx) or None when no
    cut between distinct values leaves min_leaf rows on both sides.
    """
    m = idx.size
    best = None
    best_score = np.inf
    for f in feats:
        v = x[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = y[idx[order]]
        onehot = np.zeros((m, N_CLASSES), dtype=np.int64)
        onehot[np.arange(m), sy] = 1
        prefix = np.cumsum(onehot, axis=0)
        t = np.arange(min_leaf, m - min_leaf + 1)
        if t.size == 0:
            continue
        t = t[sv[t - 1] < sv[t]]
        if t.size == 0:
            continue
        lc = prefix[t - 1].astype(np.float64)
        rc = prefix[-1].astype(np.float64) - lc
        nl = t.astype(np.float64)
        nr = m - nl
        gini_l = 1.0 - np.sum((lc / nl[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((rc / nr[:, None]) ** 2, axis=1)
        score = (nl * gini_l + nr * gini_r) / m
        j = int(np.argmin(score))
        if score[j] < best_score - 1e-15:
            cut = t[j]
            best_score = score[j]
            thr = (sv[cut - 1] + sv[cut]) / 2.0
            best = (f, thr, idx[order[:cut]], idx[order[cut:]])
    return best


def _grow_tree(x, y, params: ForestParams, rng) -> _Tree:
    n, d = x.shape
    if params.bootstrap:
        sample = rng.integers(0, n, n)
    else:
        sample = np.arange(n)
    mtry = params.mtry(d)

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(c):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(c)
        return len(feature) - 1

    # explicit stack keeps recursion depth off the table
    root_counts = np.bincount(y[sample], minlength=N_CLASSES)
    root = new_node(root_counts)
    stack = [(root, sample, root_counts, 0)]
    while stack:
        node, idx, c, depth = stack.pop()
        if (depth >= params.max_depth or idx.size < 2 * params.min_leaf
                or np.count_nonzero(c) <= 1):
            continue
        if mtry < d:
            feats = rng.choice(d, size=mtry, replace=False)
        else:
            feats = np.arange(d)
        split = _best_split(x, y, idx, feats, params.min_leaf)
        if split is None:
            continue
        f, thr, li, ri = split
        feature[node] = int(f)
        threshold[node] = float(thr)
        lc = np.bincount(y[li], minlength=N_CLASSES)
        rc = c - lc
        lnode = new_node(lc)
        rnode = new_node(rc)
        left[node] = lnode
        right[node] = rnode
        stack.append((rnode, ri, rc, depth + 1))
        stack.append((lnode, li, lc, depth + 1))
    return _Tree(feature, threshold, left, right, counts)


@dataclass(frozen=True)
class RegionClassifier:
    """Bagged tree ensemble; probabilities are hard-vote fractions.

    window and kinds record how the training design matrix was built
    when one was supplied; they are advisory metadata.
    """

    trees: tuple
    params: ForestParams
    n_features: int
    window: int = 0
    kinds: tuple = ()

    def predict_proba(self, x) -> np.ndarray:
        x = self._check(x)
        votes = np.zeros((x.shape[0], N_CLASSES), dtype=np.float64)
        for tree in self.trees:
            cls = tree.apply(x)
            votes[np.arange(x.shape[0]), cls] += 1.0
        return votes / len(self.trees)

    def predict(self, x) -> np.ndarray:
        """Class codes; ties break toward the lower code."""
        return np.argmax(self.predict_proba(x), axis=1).astype(np.int8)

    def _check(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise InputError("classifier input must be a 2-D matrix")
        if x.shape[1] != self.n_features:
            raise ArityMismatch(x.shape[1], self.n_features)
        return x

    def write(self, fh) -> None:
        fh.write("epistate-forest v1\n")
        fh.write("classes," + ",".join(str(r) for r in REGION_ORDER) + "\n")
        fh.write(f"n_features,{self.n_features}\n")
        fh.write(f"window,{self.window}\n")
        fh.write("kinds," + ",".join(self.kinds) + "\n")
        p = self.params
        fh.write(f"params,n_trees={p.n_trees},max_depth={p.max_depth},"
                 f"min_leaf={p.min_leaf},features_per_split={p.features_per_split},"
                 f"bootstrap={int(p.bootstrap)},seed={p.seed}\n")
        for i, tree in enumerate(self.trees):
            fh.write(f"tree,{i},{tree.n_nodes}\n")
            for j in range(tree.n_nodes):
                cnt = ",".join(str(c) for c in tree.counts[j])
                fh.write(f"node,{tree.feature[j]},"
                         f"{format(tree.threshold[j], '.17g')},"
                         f"{tree.left[j]},{tree.right[j]},{cnt}\n")

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            self.write(fh)

    @classmethod
    def parse(cls, lines, start: int = 0):
        """Read one serialized forest from lines[start:].

        Returns (classifier, next_line_index) so the format can be
        embedded in larger documents.
        """
        i = start
        try:
            if lines[i] != "epistate-forest v1":
                raise BadFormat(f"expected forest header, got {lines[i]!r}")
            classes = lines[i + 1].split(",")[1:]
            if classes != [str(r) for r in REGION_ORDER]:
                raise BadFormat(f"unexpected class order {classes}")
            n_features = int(lines[i + 2].split(",")[1])
            window = int(lines[i + 3].split(",")[1])
            kinds = tuple(k for k in lines[i + 4].split(",")[1:] if k)
            kv = dict(item.split("=") for item in lines[i + 5].split(",")[1:])
            params = ForestParams(
                n_trees=int(kv["n_trees"]), max_depth=int(kv["max_depth"]),
                min_leaf=int(kv["min_leaf"]),
                features_per_split=int(kv["features_per_split"]),
                bootstrap=bool(int(kv["bootstrap"])), seed=int(kv["seed"]))
            trees = []
            i += 6
            for _ in range(params.n_trees):
                head = lines[i].split(",")
                if head[0] != "tree":
                    raise BadFormat(f"expected tree header, got {lines[i]!r}")
                n_nodes = int(head[2])
                feature, threshold, left, right, counts = [], [], [], [], []
                for ln in lines[i + 1:i + 1 + n_nodes]:
                    parts = ln.split(",")
                    if parts[0] != "node" or len(parts) != 5 + N_CLASSES:
                        raise BadFormat(f"bad node row: {ln!r}")
                    feature.append(int(parts[1]))
                    threshold.append(float(parts[2]))
                    left.append(int(parts[3]))
                    right.append(int(parts[4]))
                    counts.append([int(v) for v in parts[5:]])
                trees.append(_Tree(feature, threshold, left, right, counts))
                i += 1 + n_nodes
        except BadFormat:
            raise
        except (IndexError, ValueError, KeyError) as exc:
            raise BadFormat(f"corrupt forest data: {exc}") from None
        clf = cls(trees=tuple(trees), params=params, n_features=n_features,
                  window=window, kinds=kinds)
        return clf, i

    @classmethod
    def load(cls, path) -> "RegionClassifier":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        clf, _ = cls.parse(lines)
        return clf


def train_region_classifier(m, labels, params: ForestParams = ForestParams(),
                            jobs: int = 1) -> RegionClassifier:
    """Fit the forest on a DesignMatrix (or bare matrix) and labels.

    Trees draw their randomness from streams keyed by (seed, tree index),
    so the result does not depend on jobs or scheduling order.
    """
    window, kinds = 0, ()
    if hasattr(m, "values") and hasattr(m, "columns"):
        window, kinds = m.window, m.kinds
        m = m.values
    x = np.ascontiguousarray(m, dtype=np.float64)
    if x.ndim != 2:
        raise InputError("training matrix must be 2-D")
    y = np.asarray(labels.codes if isinstance(labels, RegionLabels) else labels,
                   dtype=np.int64)
    if y.ndim != 1 or y.size != x.shape[0]:
        raise LengthMismatch(x.shape[0], y.size)
    if y.size == 0:
        raise TooFewRows(0, 2 * params.min_leaf)
    if y.min() < 0 or y.max() >= N_CLASSES:
        raise InputError("labels outside the ternary class set")
    if not np.isfinite(x).all():
        raise InputError("training matrix contains non-finite values")
    class_counts = np.bincount(y, minlength=N_CLASSES)
    present = class_counts[class_counts > 0]
    if present.size < 2:
        raise SingleClass("training labels contain a single class")
    if present.min() < params.min_leaf:
        raise TooFewRows(int(present.min()), params.min_leaf)

    def grow(i):
        rng = np.random.default_rng(np.random.SeedSequence((params.seed, i)))
        return _grow_tree(x, y, params, rng)

    trees = parallel_map(grow, range(params.n_trees), jobs)
    return RegionClassifier(trees=tuple(trees), params=params,
                            n_features=x.shape[1], window=window, kinds=kinds)


def classify_region(clf: RegionClassifier, row):
    """Region label and vote fractions for one design-matrix row."""
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1:
        raise InputError("classify_region takes a single row")
    probs = clf.predict_proba(row[None, :])[0]
    return REGION_ORDER[int(np.argmax(probs))], probs


# ---------------------------------------------------------------------------
# evaluation


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the mean of their positions."""
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    boundaries = np.nonzero(np.diff(sorted_scores))[0] + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [scores.size]))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = (s + e + 1) / 2.0
    return ranks


def auc_score(positive, scores) -> float:
    """Rank-statistic ROC AUC for one binary split."""
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if positive.size != scores.size:
        raise LengthMismatch(positive.size, scores.size)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MissingClass("positive" if n_pos == 0 else "negative")
    ranks = _average_ranks(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def region_roc(clf: RegionClassifier, m, labels) -> dict:
    """One-vs-rest AUC per region over vote fractions, keyed by name."""
    if hasattr(m, "values") and hasattr(m, "columns"):
        m = m.values
    y = np.asarray(labels.codes if isinstance(labels, RegionLabels) else labels,
                   dtype=np.int64)
    probs = clf.predict_proba(m)
    if probs.shape[0] != y.size:
        raise LengthMismatch(probs.shape[0], y.size)
    out = {}
    for code, region in enumerate(REGION_ORDER):
        mask = y == code
        if not mask.any():
            raise MissingClass(str(region))
        out[str(region)] = auc_score(mask, probs[:, code])
    return out
