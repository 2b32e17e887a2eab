"""AUC and RMSE oracles."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milbench.errors import UndefinedMetric
from milbench.metrics import TargetStats, binary_auc, macro_ovr_auc, rmse


def pair_count_auc(scores, labels):
    """O(n^2) reference: P(score_pos > score_neg) + 0.5 P(equal)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def test_auc_perfect_and_inverted():
    assert binary_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert binary_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0


def test_auc_all_tied_is_half():
    assert binary_auc([0.5] * 6, [0, 1, 0, 1, 0, 1]) == 0.5


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetric):
        binary_auc([0.1, 0.9], [1, 1])


def test_auc_hand_example_with_ties():
    scores = [0.2, 0.4, 0.4, 0.7]
    labels = [0, 0, 1, 1]
    # pairs: (0.4>0.2)=1, (0.4==0.4)=0.5, (0.7>0.2)=1, (0.7>0.4)=1 -> 3.5/4
    assert binary_auc(scores, labels) == pytest.approx(0.875)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 40))
def test_auc_matches_pair_counting(seed, n):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.normal(size=n), 1)  # rounding injects ties
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    assert binary_auc(scores, labels) == pytest.approx(
        pair_count_auc(scores, labels), abs=1e-12)


def test_macro_ovr_matches_binary_average():
    rng = np.random.default_rng(7)
    probs = rng.dirichlet(np.ones(3), size=60)
    labels = rng.integers(0, 3, size=60)
    expected = np.mean([
        binary_auc(probs[:, k], (labels == k).astype(int)) for k in range(3)])
    assert macro_ovr_auc(probs, labels) == pytest.approx(expected)


def test_macro_ovr_skips_absent_class():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1],
                      [0.6, 0.3, 0.1], [0.2, 0.7, 0.1]])
    labels = [0, 1, 0, 1]  # class 2 absent
    auc, skipped = macro_ovr_auc(probs, labels, return_skipped=True)
    assert skipped == [2]
    assert auc == pytest.approx(1.0)


def test_rmse_normalized_and_original_units():
    targets = [10.0, 20.0, 30.0, 40.0]
    stats = TargetStats.from_targets(targets)
    preds = [t + 0.5 * stats.std for t in targets]  # half-sigma off everywhere
    assert rmse(preds, targets, stats) == pytest.approx(0.5)
    assert rmse(preds, targets, stats, report_units="original") == \
        pytest.approx(0.5 * stats.std)


def test_target_stats_rejects_constant():
    with pytest.raises(ValueError):
        TargetStats.from_targets([3.0, 3.0, 3.0])
