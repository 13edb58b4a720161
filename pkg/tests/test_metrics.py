import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clora.errors import ContractError, DataError
from clora.metrics import (ConfusionMatrix, MetricsReport, NetScoreInput, accumulate, averaged_params,
                           forget_score, miou, netscore, parse_range, pareto_front, per_class_iou)


def cm_of(rows):
    a = np.array(rows, dtype=np.int64)
    return ConfusionMatrix(len(a), a)


def dominance_oracle(points):
    def dominates(y, x):
        return y[0] <= x[0] and y[1] >= x[1] and (y[0] < x[0] or y[1] > x[1])
    return [x for x in points if not any(dominates(y, x) for y in points)]


def test_accumulate_diagonal():
    gt = np.array([[0, 1], [2, 1]])
    cm = accumulate(ConfusionMatrix(3), gt, gt)
    assert np.array_equal(cm.counts, np.diag([1, 2, 1]))


def test_accumulate_ignore_only():
    cm = accumulate(ConfusionMatrix(3), np.zeros((2, 2)), np.full((2, 2), 255))
    assert cm.total == 0


def test_accumulate_pixel_loop_oracle(rng):
    gt, pred = rng.integers(0, 4, (8, 8)), rng.integers(0, 4, (8, 8))
    gt[0, :3] = 255
    oracle = np.zeros((4, 4), np.int64)
    for g, p in zip(gt.ravel(), pred.ravel()):
        if g != 255:
            oracle[g, p] += 1
    assert np.array_equal(accumulate(ConfusionMatrix(4), pred, gt).counts, oracle)


def test_accumulate_bad_id_named():
    with pytest.raises(DataError, match="7"):
        accumulate(ConfusionMatrix(3), np.array([7]), np.array([1]))
    with pytest.raises(DataError):
        accumulate(ConfusionMatrix(3), np.zeros(2), np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_accumulation_additive(seed):
    r = np.random.default_rng(seed)
    g1, p1, g2, p2 = (r.integers(0, 5, 20) for _ in range(4))
    both = accumulate(ConfusionMatrix(5), np.concatenate([p1, p2]), np.concatenate([g1, g2]))
    assert both == accumulate(ConfusionMatrix(5), p1, g1) + accumulate(ConfusionMatrix(5), p2, g2)


def test_miou_hand_case():
    cm = cm_of([[3, 1], [1, 3]])
    assert np.allclose(per_class_iou(cm), [0.6, 0.6])
    assert miou(cm, [0, 1]) == pytest.approx(60.0, abs=1e-12)


def test_miou_perfect_and_absent():
    cm = cm_of([[5, 0, 0], [0, 0, 0], [0, 0, 2]])
    assert miou(cm, range(3)) == 100.0
    assert miou(cm, [1]) is None
    with pytest.raises(ContractError):
        miou(cm, [])


def test_all_is_class_mean_not_range_mean():
    cm = cm_of([[4, 0, 0], [0, 2, 2], [0, 0, 4]])
    iou = per_class_iou(cm)
    assert miou(cm, range(3)) == pytest.approx(100 * iou.mean())
    assert miou(cm, range(3)) != pytest.approx((miou(cm, [0, 1]) + miou(cm, [2])) / 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_miou_permutation_invariant(seed):
    r = np.random.default_rng(seed)
    counts = r.integers(0, 10, (5, 5))
    perm = r.permutation(5)
    a, b = cm_of(counts), cm_of(counts[np.ix_(perm, perm)])
    assert np.allclose(per_class_iou(b), per_class_iou(a)[perm], equal_nan=True)
    m = miou(a, range(5))
    assert m == pytest.approx(miou(b, range(5)))
    assert 0.0 <= m <= 100.0


def test_parse_range():
    assert parse_range("All", 6) == list(range(6))
    assert parse_range("16-20", 21) == [16, 17, 18, 19, 20]
    with pytest.raises(ContractError):
        parse_range("3-9", 6)


def test_forget_scores_from_tables():
    assert forget_score(81.69, 14.12) == 67.57
    assert forget_score(81.69, 70.91) == 10.78
    assert forget_score(81.69, 81.69) == 0.0
    assert forget_score(70.0, 72.5) == -2.5


def test_netscore_examples():
    assert netscore(NetScoreInput(1, 1, 1)) == 0.0
    mpmath.mp.dps = 40
    oracle = 20 * mpmath.log10(mpmath.mpf("81.69") ** 2 / (mpmath.sqrt(100) * mpmath.sqrt(1000)))
    got = netscore(NetScoreInput(81.69, 100, 1000))
    assert abs(got - float(oracle)) < 1e-9
    assert got == pytest.approx(26.487, abs=1e-3)
    assert netscore(NetScoreInput(80, 3, 7)) - netscore(NetScoreInput(40, 3, 7)) == pytest.approx(20 * math.log10(4))


@pytest.mark.parametrize("bad", [dict(a_n=50, p_n=0, m_n=1), dict(a_n=50, p_n=1, m_n=-1), dict(a_n=0, p_n=1, m_n=1)])
def test_netscore_domain(bad):
    with pytest.raises(ContractError):
        NetScoreInput(**bad)


@given(st.floats(1, 99), st.floats(0.01, 1e3), st.floats(0.01, 1e6), st.floats(1.001, 1.5))
def test_netscore_monotone(a, p, m, k):
    base = netscore(NetScoreInput(a, p, m))
    assert netscore(NetScoreInput(min(a * k, 100), p, m)) > base
    assert netscore(NetScoreInput(a, p * k, m)) < base
    assert netscore(NetScoreInput(a, p, m * k)) < base


def test_averaged_params():
    assert averaged_params(100e6, 2e6) == 51.0
    assert averaged_params(5e6, 5e6) == 5.0
    with pytest.raises(ContractError):
        averaged_params(0, 1)


def test_pareto_examples():
    front = pareto_front([(1, 50, "a"), (2, 60, "b"), (3, 55, "c")])
    assert front == [(1, 50, "a"), (2, 60, "b")]
    assert pareto_front([(4, 1, "x")]) == [(4, 1, "x")]


def test_pareto_random_oracle(rng):
    for _ in range(10):
        pts = [(float(c), float(s), i) for i, (c, s) in enumerate(zip(rng.integers(0, 8, 50), rng.integers(0, 8, 50)))]
        assert sorted(pareto_front(pts), key=lambda p: p[2]) == dominance_oracle(pts)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=30))
def test_pareto_both_directions(raw):
    pts = [(float(c), float(s), i) for i, (c, s) in enumerate(raw)]
    front = pareto_front(pts)
    inside = {p[2] for p in front}

    def dominates(y, x):
        return y[0] <= x[0] and y[1] >= x[1] and (y[0] < x[0] or y[1] > x[1])

    assert not any(dominates(y, x) for x in front for y in pts)
    assert all(any(dominates(y, x) for y in front) for x in pts if x[2] not in inside)
    assert [p[0] for p in front] == sorted(p[0] for p in front)


def _report(**kw):
    base = dict(mode="CLORA", schedule="3-1", seed=0, rank=8, ranges={"0-3": 50.0, "4-5": 20.0, "All": 40.0},
                per_class_iou=[1.0, None], step_miou_all=[60.0, 50.0], fs=2.0, jt_miou_all=42.0,
                trainable_initial=10, trainable_incremental=5, total_params=100, p_n_millions=7.5e-6,
                m_n_millions=3.0, netscore=1.0, kd_weight=10.0, kd_temperature=1.0)
    base.update(kw)
    return MetricsReport(**base)


def test_report_round_trip_and_csv():
    r = _report()
    d = json.loads(r.to_json())
    assert d["miou_all"] == 40.0 and d["trainable_fraction"] == 0.05
    assert d["units"]["m_N"].startswith("millions of MACs")
    assert MetricsReport.from_dict(d) == r
    header, row = r.to_csv().strip().split("\n")
    assert header.split(",")[0] == "mode" and row.startswith("CLORA,3-1,0,8,40.0")
