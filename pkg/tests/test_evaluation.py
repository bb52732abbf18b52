"""Fold construction, CoERR scoring, and the eval report format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epistate.dataset import State
from epistate.errors import BadFormat, InputError, TooFewSessions
from epistate.evaluation import (
    DEFAULT_SWEEP,
    EvalReport,
    ablate_regions,
    block_folds,
    coerr,
    config_echo,
    fold_assignment,
    kfold_cv,
    make_folds,
    window_sweep,
)
from epistate.regress import (
    StateModelConfig,
    predict_state,
    train_state_model,
    training_weights,
)
from epistate.regions import ForestParams
from epistate.stats import pearson

from conftest import make_session

STATE = State.CONCENTRATION
SMALL = StateModelConfig(window=10, forest=ForestParams(n_trees=5, max_depth=8),
                         tau=0.15, mic_max_points=128)


def test_coerr_is_pearson(rng):
    a = rng.normal(0, 1, 60)
    b = 0.4 * a + rng.normal(0, 0.5, 60)
    assert coerr(a, b) == pearson(a, b)
    s = make_session(0)
    tr = s.trace(STATE)
    assert coerr(tr, tr.values) == pytest.approx(1.0)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_fold_assignment_partitions(k, seed):
    n = k + seed % 20
    groups = fold_assignment(n, k, seed)
    assert len(groups) == k
    flat = sorted(i for g in groups for i in g)
    assert flat == list(range(n))
    assert all(groups[f] == sorted(groups[f]) for f in range(k))


def test_fold_assignment_seed_and_errors():
    assert fold_assignment(20, 4, 7) == fold_assignment(20, 4, 7)
    assert fold_assignment(20, 4, 7) != fold_assignment(20, 4, 8)
    with pytest.raises(InputError):
        fold_assignment(10, 1, 0)
    with pytest.raises(TooFewSessions):
        fold_assignment(3, 4, 0)


def test_make_folds_session_level(sessions):
    folds = make_folds(sessions, STATE, SMALL, k=5, seed=0)
    assert len(folds) == 5
    ids = [s.session_id for s in sessions]
    for train, test in folds:
        assert len(test) == 1
        got = sorted(s.session_id for s in train + test)
        assert got == sorted(ids)
    tested = sorted(t[0].session_id for _, t in folds)
    assert tested == sorted(ids)


def test_make_folds_block_fallback(sessions):
    # 2 sessions cannot fill 3 session-level folds; blocks take over
    folds = make_folds(sessions[:2], STATE, SMALL, k=3, seed=0)
    assert len(folds) == 3
    n = sessions[0].n_frames
    w = SMALL.window
    for f, (train, test) in enumerate(folds):
        assert len(test) == 2  # one block per session
        bounds = [round(j * n / 3) for j in range(4)]
        a, b = bounds[f], bounds[f + 1]
        assert all(t.n_frames == b - a for t in test)
        # train blocks keep a one-window gap from the test block
        for t in train:
            lo, hi = t.session_id.rsplit("[", 1)[1].rstrip("]").split(":")
            assert int(hi) <= a - w or int(lo) >= b + w


def test_block_folds_too_short(sessions):
    with pytest.raises(TooFewSessions):
        block_folds(sessions[:2], k=3, window=100, smooth=100)
    with pytest.raises(TooFewSessions):
        make_folds([], STATE, SMALL, k=3, seed=0)


def test_kfold_cv_report_and_oracle(sessions):
    rep = kfold_cv(sessions, STATE, SMALL, k=3, seed=1)
    assert rep.k == 3 and rep.seed == 1 and rep.window == 10
    assert rep.state is STATE
    assert len(rep.fold_coerr) == 3
    assert not rep.has_ablation
    assert -1.0 <= rep.mean <= 1.0
    assert dict(rep.config_echo)["window"] == "10"
    assert {n for n, _ in rep.versions} == {"epistate", "numpy", "python"}

    # recompute fold 0 by hand: same weights, same model, body-only scoring
    train, test = make_folds(sessions, STATE, SMALL, k=3, seed=1)[0]
    weights = training_weights(train, STATE, SMALL)
    model = train_state_model(train, STATE, SMALL, weights=weights)
    w = SMALL.window
    scores = [coerr(predict_state(model, s.features).values[w - 1:],
                    s.trace(STATE).values[w - 1:]) for s in test]
    assert rep.fold_coerr[0] == pytest.approx(float(np.mean(scores)), abs=1e-12)


def test_kfold_cv_deterministic_and_jobs_invariant(sessions):
    a = kfold_cv(sessions, STATE, SMALL, k=2, seed=3, jobs=1)
    b = kfold_cv(sessions, STATE, SMALL, k=2, seed=3, jobs=2)
    assert a.fold_coerr == b.fold_coerr
    c = kfold_cv(sessions, STATE, SMALL, k=2, seed=4)
    assert a.fold_coerr != c.fold_coerr  # different fold split


def test_ablate_regions_shares_folds(sessions):
    rep = ablate_regions(sessions[:4], STATE, SMALL, k=2, seed=0)
    assert rep.has_ablation
    assert len(rep.without_fold_coerr) == len(rep.fold_coerr) == 2
    assert np.isfinite(rep.delta_percent)
    # the gated arm matches a plain kfold_cv on the same folds and seed
    plain = kfold_cv(sessions[:4], STATE, SMALL, k=2, seed=0)
    assert rep.fold_coerr == plain.fold_coerr


def sample_report(**over):
    base = dict(
        state=STATE, k=2, seed=5, window=10,
        fold_coerr=(0.8125, 0.9), without_fold_coerr=(0.7, 0.85),
        sweep=((5, 0.5, 0.1), (10, 0.6123456789012345, 0.05)),
        config_echo=(("window", "10"), ("svr.kernel", "rbf")),
        versions=(("numpy", "1.0"),))
    base.update(over)
    return EvalReport(**base)


def test_report_arithmetic():
    rep = sample_report()
    assert rep.mean == pytest.approx(0.85625)
    assert rep.std == pytest.approx(np.std([0.8125, 0.9]))
    assert rep.without_mean == pytest.approx(0.775)
    assert rep.delta_percent == pytest.approx(100 * (0.85625 - 0.775) / 0.775)
    assert rep.best_window == 10
    with pytest.raises(InputError):
        sample_report(sweep=()).best_window


def test_report_round_trip(tmp_path):
    rep = sample_report()
    path = tmp_path / "report.txt"
    rep.to_text(path)
    back = EvalReport.from_text(path)
    assert back == rep
    # no-ablation, no-sweep variant omits those sections cleanly
    bare = sample_report(without_fold_coerr=(), sweep=())
    bare.to_text(path)
    assert EvalReport.from_text(path) == bare


def test_report_rejects_garbage(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("wrong header\n")
    with pytest.raises(BadFormat):
        EvalReport.from_text(p)
    rep = sample_report()
    rep.to_text(p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:6]) + "\n")
    with pytest.raises(BadFormat):
        EvalReport.from_text(p)


def test_csv_writers(tmp_path):
    rep = sample_report()
    fp, sp = tmp_path / "folds.csv", tmp_path / "sweep.csv"
    rep.write_fold_csv(fp)
    lines = fp.read_text().splitlines()
    assert lines[0] == "fold,coerr,coerr_without"
    assert lines[1].startswith("0,0.8125,")
    assert len(lines) == 3
    sample_report(without_fold_coerr=()).write_fold_csv(fp)
    assert fp.read_text().splitlines()[0] == "fold,coerr"
    rep.write_sweep_csv(sp)
    lines = sp.read_text().splitlines()
    assert lines[0] == "window,mean_coerr,std_coerr"
    assert lines[1].startswith("5,0.5,")


def test_config_echo_covers_all_knobs():
    echo = dict(config_echo(SMALL))
    for key in ("window", "deadband", "tau", "smooth", "mic.alpha",
                "forest.n_trees", "svr.C", "svr.kernel"):
        assert key in echo
    assert echo["forest.n_trees"] == "5"


def test_window_sweep_small(sessions):
    rep = window_sweep(sessions, STATE, windows=(5, 10), cfg=SMALL, k=2, seed=0)
    assert len(rep.sweep) == 2
    assert [w for w, _, _ in rep.sweep] == [5, 10]
    assert all(np.isfinite(m) and s >= 0 for _, m, s in rep.sweep)
    assert rep.best_window in (5, 10)
    assert DEFAULT_SWEEP == (5, 10, 20, 40, 60, 80, 100)


def test_window_sweep_validation(sessions):
    with pytest.raises(InputError):
        window_sweep(sessions, STATE, windows=(), cfg=SMALL, k=2)
    with pytest.raises(InputError):
        window_sweep(sessions, STATE, windows=(1,), cfg=SMALL, k=2)
    with pytest.raises(InputError):
        window_sweep(sessions, STATE, windows=(500,), cfg=SMALL, k=2)
    with pytest.raises(TooFewSessions):
        window_sweep([], STATE, windows=(5,), cfg=SMALL, k=2)
