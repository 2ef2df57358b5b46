"""Metric tests: hand cases, O(n^2) oracles, and algebraic properties."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymdiff.errors import ConfigError, DataError, UndefinedMetricError
from asymdiff.metrics import (
    CSV_COLUMNS,
    MetricsReport,
    ScoredExample,
    auc,
    collate,
    evaluate_scores,
    logloss,
    relaimpr,
    uauc,
)

from conftest import pairwise_auc_oracle


def uauc_oracle(users, labels, scores) -> float:
    """Count-weighted mean of per-user pairwise AUCs, skipping one-class users."""
    users = np.asarray(users)
    num = den = 0.0
    for u in np.unique(users):
        idx = users == u
        y = np.asarray(labels)[idx]
        if y.min() == y.max():
            continue
        num += idx.sum() * pairwise_auc_oracle(y, np.asarray(scores)[idx])
        den += idx.sum()
    return num / den


# ---------------------------------------------------------------------------
# auc
# ---------------------------------------------------------------------------

def test_auc_perfect_ordering_is_one():
    assert auc([0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4]) == 1.0


def test_auc_reversed_ordering_is_zero():
    assert auc([1, 1, 0, 0], [0.1, 0.2, 0.3, 0.4]) == 0.0


def test_auc_all_tied_scores_is_half():
    assert auc([0, 1, 0, 1], [0.7, 0.7, 0.7, 0.7]) == 0.5


def test_auc_tie_gets_half_credit():
    # pairs: (0.9 vs 0.1) correct, (0.5 vs 0.5) tie -> (1 + 0.5) / 2? no:
    # pos scores {0.9, 0.5}, neg scores {0.1, 0.5}; 4 pairs = 3 wins + 1 tie
    assert auc([1, 1, 0, 0], [0.9, 0.5, 0.1, 0.5]) == pytest.approx(3.5 / 4, abs=1e-15)


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        auc([1, 1, 1], [0.1, 0.2, 0.3])
    with pytest.raises(UndefinedMetricError):
        auc([0, 0], [0.1, 0.2])


def test_auc_rejects_non_finite_scores():
    with pytest.raises(DataError):
        auc([0, 1], [0.1, np.nan])


def test_auc_matches_pairwise_oracle_with_ties():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = 200
        labels = rng.integers(0, 2, n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        # quantized scores force plenty of ties
        scores = np.round(rng.random(n), 1)
        assert abs(auc(labels, scores) - pairwise_auc_oracle(labels, scores)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_auc_invariant_under_strictly_increasing_transforms(data):
    n = data.draw(st.integers(4, 60))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    labels = rng.integers(0, 2, n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    scores = np.round(rng.normal(size=n), 1)
    base = auc(labels, scores)
    assert abs(auc(labels, 3.0 * scores + 7.0) - base) < 1e-12
    assert abs(auc(labels, np.exp(scores / 4.0)) - base) < 1e-12  # /4 keeps exp exact-safe


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_auc_label_flip_symmetry(data):
    n = data.draw(st.integers(4, 60))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    labels = rng.integers(0, 2, n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    scores = np.round(rng.normal(size=n), 1)
    assert abs(auc(labels, scores) + auc(1 - labels, scores) - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# uauc
# ---------------------------------------------------------------------------

def test_uauc_hand_case_count_weighted():
    users = [1, 1, 1, 1, 2, 2]
    labels = [0, 0, 1, 1, 0, 1]
    scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.5]  # user 1 perfect, user 2 tied
    res = uauc(users, labels, scores)
    assert res.value == pytest.approx((4 * 1.0 + 2 * 0.5) / 6, abs=1e-15)
    assert res.n_users_scored == 2
    assert res.n_users_skipped == 0


def test_uauc_skips_and_counts_single_class_users():
    users = [1, 1, 2, 2, 3]
    labels = [0, 1, 1, 1, 0]
    scores = [0.2, 0.8, 0.5, 0.6, 0.4]
    res = uauc(users, labels, scores)
    assert res.value == 1.0  # only user 1 is scorable
    assert res.n_users_scored == 1
    assert res.n_users_skipped == 2


def test_uauc_undefined_when_no_user_scorable():
    with pytest.raises(UndefinedMetricError):
        uauc([1, 1, 2], [1, 1, 0], [0.1, 0.2, 0.3])


def test_uauc_equals_auc_when_every_user_sees_the_same_examples():
    rng = np.random.default_rng(3)
    labels1 = rng.integers(0, 2, 30)
    labels1[0], labels1[1] = 0, 1
    scores1 = np.round(rng.random(30), 1)
    users = np.repeat([1, 2, 3], 30)
    labels = np.tile(labels1, 3)
    scores = np.tile(scores1, 3)
    res = uauc(users, labels, scores)
    assert abs(res.value - auc(labels1, scores1)) < 1e-12


def test_uauc_matches_brute_force_oracle():
    rng = np.random.default_rng(7)
    for trial in range(10):
        n = 300
        users = rng.integers(0, 50, n)
        labels = rng.integers(0, 2, n)
        scores = np.round(rng.random(n), 1)
        try:
            fast = uauc(users, labels, scores)
        except UndefinedMetricError:
            continue
        assert abs(fast.value - uauc_oracle(users, labels, scores)) < 1e-12


def test_uauc_is_order_independent():
    rng = np.random.default_rng(11)
    users = rng.integers(0, 8, 100)
    labels = rng.integers(0, 2, 100)
    scores = rng.random(100)
    perm = rng.permutation(100)
    a = uauc(users, labels, scores)
    b = uauc(users[perm], labels[perm], scores[perm])
    assert abs(a.value - b.value) < 1e-12
    assert (a.n_users_scored, a.n_users_skipped) == (b.n_users_scored, b.n_users_skipped)


# ---------------------------------------------------------------------------
# relaimpr
# ---------------------------------------------------------------------------

def test_relaimpr_reported_deltas():
    assert abs(relaimpr(0.92359, 0.92267) - 0.100) < 0.001
    assert abs(relaimpr(0.62614, 0.61578) - 1.682) < 0.001
    assert abs(relaimpr(0.62152, 0.61578) - 0.932) < 0.001


def test_relaimpr_of_equal_metrics_is_zero():
    assert relaimpr(0.75, 0.75) == 0.0


def test_relaimpr_rejects_nonpositive_base():
    with pytest.raises(ConfigError):
        relaimpr(0.7, 0.0)
    with pytest.raises(ConfigError):
        relaimpr(0.7, -0.1)


# ---------------------------------------------------------------------------
# logloss
# ---------------------------------------------------------------------------

def test_logloss_uninformative_is_ln2():
    assert logloss([0, 1, 0, 1], [0.5] * 4) == pytest.approx(np.log(2), abs=1e-15)


def test_logloss_perfect_predictions_near_zero():
    val = logloss([0, 1], [0.0, 1.0])
    assert 0 < val < 1e-6  # clamping keeps it positive and finite


def test_logloss_matches_naive_loop():
    rng = np.random.default_rng(5)
    labels = rng.integers(0, 2, 64)
    p = rng.random(64)
    total = 0.0
    for y, q in zip(labels, p):
        q = min(max(q, 1e-7), 1 - 1e-7)
        total += -(y * np.log(q) + (1 - y) * np.log1p(-q))
    assert abs(logloss(labels, p) - total / 64) < 1e-12


# ---------------------------------------------------------------------------
# ScoredExample / collate / evaluate_scores
# ---------------------------------------------------------------------------

def test_scored_example_validation():
    with pytest.raises(DataError):
        ScoredExample(user_id=1, label=2, score=0.5)
    with pytest.raises(DataError):
        ScoredExample(user_id=1, label=1, score=float("inf"))


def test_collate_and_evaluate_scores():
    ex = [
        ScoredExample(1, 0, 0.2), ScoredExample(1, 1, 0.9),
        ScoredExample(2, 1, 0.8), ScoredExample(2, 0, 0.1),
    ]
    users, labels, scores = collate(ex)
    fields = evaluate_scores(users, labels, scores)
    assert fields["auc"] == 1.0
    assert fields["uauc"] == 1.0
    assert fields["n_examples"] == 4
    assert fields["n_users_scored"] == 2
    assert fields["n_users_skipped"] == 0


# ---------------------------------------------------------------------------
# MetricsReport
# ---------------------------------------------------------------------------

def report(**over):
    base = dict(arm="asymdiff", seed=0, auc=0.7, uauc=0.68, logloss=0.6,
                n_examples=100, n_users_scored=10, n_users_skipped=2,
                serving_path="serve_predict", config_hash="abc")
    base.update(over)
    return MetricsReport(**base)


def test_report_json_round_trip():
    rep = report().with_baseline("base", 0.65, 0.64)
    clone = MetricsReport.from_json(rep.to_json())
    assert clone == rep
    # canonical form: stable across dumps
    assert clone.to_json() == rep.to_json()


def test_report_rejects_out_of_range_metrics():
    with pytest.raises(ConfigError):
        report(auc=1.2)
    with pytest.raises(ConfigError):
        report(uauc=-0.1)


def test_report_with_baseline_fills_relaimpr():
    rep = report(auc=0.66, uauc=0.64).with_baseline("base", 0.6, 0.64)
    assert rep.relaimpr["base"]["auc"] == pytest.approx(10.0, abs=1e-12)
    assert rep.relaimpr["base"]["uauc"] == 0.0


def test_report_csv_row_matches_columns():
    rep = report().with_baseline("base", 0.65, 0.64)
    row = rep.to_csv_row()
    assert len(row) == len(CSV_COLUMNS)
    d = dict(zip(CSV_COLUMNS, row))
    assert d["arm"] == "asymdiff"
    assert d["relaimpr_vs"] == "base"
    assert float(d["auc"]) == 0.7
    # floats survive a parse round trip exactly (repr formatting)
    assert float(d["relaimpr_auc"]) == rep.relaimpr["base"]["auc"]
