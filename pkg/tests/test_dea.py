import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import FLIP_INPUTS, random_cross_section, ratio_ccr, two_input_multiplier
from rankdea.data import PanelDataset
from rankdea.dea import (
    AP_UNBOUNDED,
    CrossSection,
    ap_score,
    ap_to_h,
    ccr_score,
    cross_section_scores,
    efficiency_panel,
    h_score,
    h_to_ap,
    log_score,
    rank_cross_section,
    rank_panel,
    solve_dmu,
)
from rankdea.exceptions import EfficiencyWarning, TieWarning, ValidationError
from rankdea.lp import LpStatus

GOLDEN = Path(__file__).parent / "data" / "golden_ratio_5x3.csv"


def test_two_dmu_hand_values(two_dmu):
    assert ccr_score(two_dmu, 0) == pytest.approx(1.0, abs=1e-12)
    assert ccr_score(two_dmu, 1) == pytest.approx(0.5, abs=1e-12)
    assert ap_score(two_dmu, 0) == pytest.approx(2.0, abs=1e-12)
    assert ap_score(two_dmu, 1) == pytest.approx(0.5, abs=1e-12)
    assert h_score(two_dmu, 0) == pytest.approx(4 / 3, abs=1e-12)
    assert h_score(two_dmu, 1) == pytest.approx(2 / 3, abs=1e-12)


@pytest.mark.parametrize("model", ["ccr", "ap", "h"])
def test_identical_dmus_score_one(model):
    cs = CrossSection([[2.0, 3.0], [2.0, 3.0]], [[1.0], [1.0]])
    assert cross_section_scores(cs, model) == pytest.approx([1.0, 1.0], abs=1e-12)


def test_transforms():
    assert ap_to_h(1.0) == 1.0
    assert ap_to_h(2.0) == pytest.approx(4 / 3)
    assert h_to_ap(2 / 3) == pytest.approx(0.5)
    assert ap_to_h(AP_UNBOUNDED) == 2.0
    assert h_to_ap(2.0) == AP_UNBOUNDED
    assert log_score(1.0) == 0.0
    assert log_score(2.0) == pytest.approx(np.log(2))
    # the log of AP rewritten through the universal score
    h = ap_to_h(2.0)
    assert -np.log(2 / h - 1) == pytest.approx(log_score(2.0), abs=1e-15)


@given(st.floats(min_value=1e-6, max_value=1e6))
def test_transform_roundtrip(a):
    assert h_to_ap(ap_to_h(a)) == pytest.approx(a, rel=1e-9)


def test_rank_simple():
    assert list(rank_cross_section([0.5, 2.0])) == [2, 1]


def test_rank_ties_warn_and_break_by_index():
    with pytest.warns(TieWarning, match=r"\[0, 1\]"):
        ranks = rank_cross_section([1.0, 1.0, 0.3])
    assert list(ranks) == [1, 2, 3]
    with pytest.warns(TieWarning):
        assert list(rank_cross_section([0.3, 1.0, 1.0 + 1e-12])) == [3, 1, 2]


@pytest.mark.parametrize("seed", range(30))
def test_single_ratio_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    x, y = rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, n)
    cs = CrossSection(x[:, None], y[:, None])
    assert cross_section_scores(cs, "ccr") == pytest.approx(ratio_ccr(x, y), abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_two_input_oracle(seed):
    rng = np.random.default_rng(50 + seed)
    X = rng.uniform(0.5, 4, (6, 2))
    cs = CrossSection(X, np.ones((6, 1)))
    for n in range(6):
        assert ccr_score(cs, n) == pytest.approx(two_input_multiplier(X, n), abs=1e-9)
        assert ap_score(cs, n) == pytest.approx(two_input_multiplier(X, n, exclude_self=True), abs=1e-9)


def test_flip_fixture_oracle():
    X = np.array(FLIP_INPUTS)
    cs = CrossSection(X, np.ones((3, 1)))
    full = cross_section_scores(cs, "ap")
    assert full == pytest.approx([two_input_multiplier(X, n, True) for n in range(3)], abs=1e-12)
    assert full[2] > full[1]
    reduced = cross_section_scores(cs.without(0), "ap")
    assert reduced[0] > reduced[1]


@pytest.mark.parametrize("seed", range(15))
def test_h_matches_transformed_ap_and_ccr_relation(seed):
    cs = random_cross_section(np.random.default_rng(seed))
    ap = cross_section_scores(cs, "ap")
    h = cross_section_scores(cs, "h")
    ccr = cross_section_scores(cs, "ccr")
    assert np.max(np.abs(h - ap_to_h(ap))) <= 1e-7
    assert np.max(np.abs(ccr - np.minimum(ap, 1.0))) <= 1e-7
    assert np.all(ccr <= 1 + 1e-9) and np.all((h >= -1e-9) & (h <= 2 + 1e-9))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TieWarning)
        assert list(rank_cross_section(ap)) == list(rank_cross_section(h))


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (6, 2), elements=st.floats(0.5, 20)),
    arrays(np.float64, (6, 2), elements=st.floats(0.5, 20)),
    st.integers(0, 3),
    st.floats(1e-3, 1e3),
)
def test_units_invariance(X, Y, col, c):
    cs = CrossSection(X, Y)
    X2, Y2 = X.copy(), Y.copy()
    if col < 2:
        X2[:, col] *= c
    else:
        Y2[:, col - 2] *= c
    scaled = CrossSection(X2, Y2)
    for model in ("ccr", "ap", "h"):
        a = cross_section_scores(cs, model)
        b = cross_section_scores(scaled, model)
        assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))) <= 1e-7


@pytest.mark.parametrize("seed", range(15))
def test_removing_inefficient_dmu_keeps_ccr_scores(seed):
    cs = random_cross_section(np.random.default_rng(300 + seed), n=8)
    ccr = cross_section_scores(cs, "ccr")
    for n in np.flatnonzero(ccr < 1 - 1e-6):
        keep = np.arange(cs.n_dmus) != n
        assert cross_section_scores(cs.without(n), "ccr") == pytest.approx(ccr[keep], abs=1e-7)


@pytest.mark.parametrize("seed", range(15))
def test_removing_redundant_dmu_keeps_ap_scores(seed):
    # DMU n is redundant for DMU k's super-efficiency program when n stays
    # inefficient against the benchmark set that excludes k
    cs = random_cross_section(np.random.default_rng(300 + seed), n=8)
    ap = cross_section_scores(cs, "ap")
    checked = 0
    for n in range(cs.n_dmus):
        reduced = cross_section_scores(cs.without(n), "ap")
        others = [k for k in range(cs.n_dmus) if k != n]
        for pos, k in enumerate(others):
            without_k = cs.without(k)
            if ccr_score(without_k, n - (n > k)) < 1 - 1e-6:
                assert reduced[pos] == pytest.approx(ap[k], abs=1e-7)
                checked += 1
    assert checked > 0


def test_inefficient_dmu_can_bind_for_super_efficiency():
    # ratios 2, 1.5, 1: the middle DMU is CCR-inefficient but is the best
    # benchmark once the leader is excluded from its own program
    cs = CrossSection([[1.0], [1.0], [1.0]], [[2.0], [1.5], [1.0]])
    assert ccr_score(cs, 1) == pytest.approx(0.75)
    assert ap_score(cs, 0) == pytest.approx(2 / 1.5)
    assert ap_score(cs.without(1), 0) == pytest.approx(2.0)


def test_single_frontier_dmu_is_unaffected_in_rank():
    rng = np.random.default_rng(4)
    X = rng.uniform(2, 5, (6, 2))
    X[0] = [0.5, 0.5]  # dominates everyone
    cs = CrossSection(X, np.ones((6, 1)))
    ccr = cross_section_scores(cs, "ccr")
    assert ccr[0] == pytest.approx(1.0) and np.all(ccr[1:] < 1 - 1e-6)
    ap = cross_section_scores(cs, "ap")
    for n in range(1, 6):
        keep = np.arange(6) != n
        reduced = cross_section_scores(cs.without(n), "ap")
        assert reduced[1:] == pytest.approx(ap[keep][1:], abs=1e-7)
        assert list(rank_cross_section(reduced)) == list(
            np.argsort(np.argsort(rank_cross_section(ap)[keep])) + 1)


def test_unbounded_super_efficiency_uses_sentinel():
    # DMU 0 is the only producer of the first output
    cs = CrossSection([[1.0], [1.0], [1.0]], [[1.0, 0.0], [0.0, 1.0], [0.0, 2.0]])
    with pytest.warns(EfficiencyWarning):
        score, status = solve_dmu(cs, 0, "ap")
    assert status is LpStatus.UNBOUNDED
    assert score == AP_UNBOUNDED
    assert ap_to_h(score) == 2.0
    # the universal program stays bounded and agrees with the transform
    assert h_score(cs, 0) == pytest.approx(2.0, abs=1e-9)


def test_cross_section_validation():
    with pytest.raises(ValidationError):
        CrossSection([[1.0]], [[1.0]])
    with pytest.raises(ValidationError):
        CrossSection([[1.0], [0.0]], [[1.0], [1.0]])
    with pytest.raises(ValidationError):
        CrossSection([[1.0], [1.0]], [[1.0], [0.0]])


def _panel(x, y, periods=None, labels=None):
    x, y = np.asarray(x, float), np.asarray(y, float)
    N, T = x.shape
    return PanelDataset(labels or [f"U{n + 1}" for n in range(N)], periods or list(range(1, T + 1)),
                        x[:, None, :], y[:, None, :])


def test_single_period_panel_equals_cross_section(two_dmu):
    data = _panel([[1.0], [1.0]], [[2.0], [1.0]])
    for model in ("ccr", "ap", "h"):
        panel = efficiency_panel(data, model)
        assert panel.scores[:, 0] == pytest.approx(cross_section_scores(two_dmu, model), abs=1e-12)


def test_stacked_periods_are_identical():
    data = _panel([[1.0, 1.0], [1.0, 1.0]], [[2.0, 2.0], [1.0, 1.0]])
    for model in ("ccr", "ap", "h", "log"):
        s = efficiency_panel(data, model).scores
        assert np.array_equal(s[:, 0], s[:, 1])
    assert efficiency_panel(data, "log").scores[:, 0] == pytest.approx([np.log(2), np.log(0.5)])


def test_golden_ratio_panel():
    g = pd.read_csv(GOLDEN)
    labels = list(dict.fromkeys(g["dmu"]))
    periods = sorted(g["period"].unique())
    x = g.pivot(index="dmu", columns="period", values="x").loc[labels].to_numpy()
    y = g.pivot(index="dmu", columns="period", values="y").loc[labels].to_numpy()
    want = g.pivot(index="dmu", columns="period", values="ccr").loc[labels].to_numpy()
    panel = efficiency_panel(_panel(x, y, periods, labels), "ccr")
    assert np.max(np.abs(panel.scores - want)) <= 1e-9
    assert panel.periods == periods and panel.failures == []


def test_threaded_panel_matches_serial():
    rng = np.random.default_rng(9)
    data = PanelDataset([f"D{i}" for i in range(7)], [1, 2, 3, 4], rng.uniform(1, 5, (7, 2, 4)),
                        rng.uniform(1, 5, (7, 2, 4)))
    for model in ("ap", "h"):
        a = efficiency_panel(data, model, threads=1).scores
        b = efficiency_panel(data, model, threads=3).scores
        assert np.array_equal(a, b)
    r = rank_panel(efficiency_panel(data, "h"))
    assert r.ranks.shape == (4, 7)
    assert all(sorted(row) == list(range(1, 8)) for row in r.ranks)
