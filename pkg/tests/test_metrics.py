import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homemoe.metrics import MetricError, auc, gauc, per_user_auc, ranking_score

from conftest import brute_force_auc


def test_auc_examples():
    assert auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auc([0.5, 0.5], [1, 0]) == 0.5
    # both positives rank below the one negative: 0 of 2 pairs
    assert auc([0.2, 0.8, 0.6], [1, 0, 1]) == brute_force_auc([0.2, 0.8, 0.6], [1, 0, 1]) == 0.0


def test_auc_matches_brute_force_on_1000_instances():
    r = np.random.default_rng(2024)
    done = 0
    while done < 1000:
        n = int(r.integers(2, 51))
        # coarse scores so ties are common
        scores = r.integers(0, 6, size=n) / 5.0 if r.random() < 0.5 else r.random(n)
        labels = (r.random(n) < r.uniform(0.1, 0.9)).astype(int)
        if labels.min() == labels.max():
            continue
        assert abs(auc(scores, labels) - brute_force_auc(scores, labels)) <= 1e-12
        done += 1


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(-80, 80), st.booleans()), min_size=2, max_size=40))
def test_auc_invariant_under_increasing_transforms(pairs):
    # a grid of 1/16 keeps exp and the affine map strictly increasing in float64
    s = np.array([p[0] / 16.0 for p in pairs])
    y = np.array([p[1] for p in pairs], dtype=float)
    if y.min() == y.max():
        return
    base = auc(s, y)
    assert auc(np.exp(s), y) == pytest.approx(base, abs=1e-12)
    assert auc(3.0 * s + 7.0, y) == pytest.approx(base, abs=1e-12)


def test_auc_single_class_raises():
    with pytest.raises(MetricError, match="undefined"):
        auc([0.1, 0.2], [1, 1])


def test_auc_rejects_soft_labels():
    with pytest.raises(MetricError):
        auc([0.1, 0.2], [0.5, 1])


def test_gauc_worked_example():
    # u1: 4 logs, perfectly ranked; u2: 6 logs, all scores tied
    scores = [0.9, 0.8, 0.2, 0.1] + [0.5] * 6
    labels = [1, 1, 0, 0] + [1, 0, 1, 0, 1, 0]
    users = [1] * 4 + [2] * 6
    assert gauc(scores, labels, users) == pytest.approx(0.7, abs=1e-15)


def test_gauc_one_user_equals_auc():
    r = np.random.default_rng(0)
    s, y = r.random(30), (r.random(30) < 0.4).astype(int)
    assert gauc(s, y, np.zeros(30)) == auc(s, y)


def test_single_class_user_is_excluded_and_weights_renormalised():
    scores = [0.9, 0.8, 0.2, 0.1] + [0.5] * 6 + [0.3, 0.4, 0.5]
    labels = [1, 1, 0, 0] + [1, 0, 1, 0, 1, 0] + [1, 1, 1]
    users = [1] * 4 + [2] * 6 + [3] * 3
    assert gauc(scores, labels, users) == pytest.approx(0.7, abs=1e-15)


def test_gauc_no_eligible_user():
    with pytest.raises(MetricError):
        gauc([0.1, 0.2, 0.3], [1, 1, 0], [0, 0, 1])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_gauc_matches_hand_composed_weighting(seed, n_users):
    r = np.random.default_rng(seed)
    users = r.integers(0, n_users, size=60)
    s = r.integers(0, 5, size=60).astype(float)
    y = (r.random(60) < 0.4).astype(int)
    num = den = 0.0
    for u in np.unique(users):
        m = users == u
        if 0 < y[m].sum() < m.sum():
            num += m.sum() * brute_force_auc(s[m], y[m])
            den += m.sum()
    if den == 0:
        with pytest.raises(MetricError):
            gauc(s, y, users)
    else:
        assert abs(gauc(s, y, users) - num / den) < 1e-12


def test_per_user_auc_unsorted_ids():
    users, aucs, counts = per_user_auc([0.1, 0.9, 0.8, 0.2], [0, 1, 1, 0], [7, 3, 7, 3])
    assert users.tolist() == [3, 7]
    assert aucs.tolist() == [1.0, 1.0]
    assert counts.tolist() == [2, 2]


def test_ranking_score_examples():
    assert ranking_score({"ctr": 0.5, "evtr": 0.25}, {"ctr": 2, "evtr": 4}) == 2.0
    assert ranking_score({"ctr": 0.3, "evtr": 0.7}, {"ctr": 1.0, "evtr": 0.0}) == 0.3
    assert ranking_score({"ctr": 0.3, "evtr": 0.7}, {"ctr": 0.0, "evtr": 0.0}) == 0.0
    np.testing.assert_allclose(ranking_score({"ctr": np.array([0.1, 0.2])}, {"ctr": 2.0}), [0.2, 0.4])


def test_ranking_score_missing_coefficient():
    with pytest.raises(MetricError, match="evtr"):
        ranking_score({"ctr": 0.5, "evtr": 0.2}, {"ctr": 1.0})
