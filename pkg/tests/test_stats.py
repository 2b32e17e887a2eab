"""Wilcoxon / BH / ranking unit tests."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from milbench.errors import DegeneratePair, InvalidInput
from milbench.stats import (bh_adjust, compare_encoders, pairwise_tests,
                            rank_with_significance, significance_matrix,
                            wilcoxon_signed_rank, win_tie_loss)


def brute_wilcoxon_p(x, y):
    """Literal 2^n enumeration of the signed-rank null."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = len(d)
    absd = np.abs(d)
    # midranks
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n)
    i = 0
    sa = absd[order]
    while i < n:
        j = i
        while j + 1 < n and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    total = ranks.sum()
    w_obs = min(ranks[d > 0].sum(), total - ranks[d > 0].sum())
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(r for r, keep in zip(ranks, signs) if keep)
        if min(s, total - s) <= w_obs + 1e-9:
            count += 1
    return min(count, 2 ** n) / 2 ** n


def test_wilcoxon_n5_all_positive():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert res.p_two_sided == pytest.approx(0.0625, abs=0)
    assert res.method == "exact"
    assert res.n_effective == 5


def test_wilcoxon_drops_zeros():
    res = wilcoxon_signed_rank([1, 2, 3, 4, 5, 7], [1, 0, 0, 0, 0, 0])
    assert res.n_effective == 5
    assert res.p_two_sided == pytest.approx(0.0625)


def test_wilcoxon_all_zero_degenerate():
    with pytest.raises(DegeneratePair):
        wilcoxon_signed_rank([1.0] * 6, [1.0] * 6)


def test_wilcoxon_too_few_pairs():
    with pytest.raises(InvalidInput):
        wilcoxon_signed_rank([1, 2, 3, 4], [0, 0, 0, 0])


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 10))
def test_wilcoxon_exact_matches_enumeration(seed, n):
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=n), 1)
    y = np.round(rng.normal(size=n), 1)
    if np.count_nonzero(x - y) == 0:
        return
    res = wilcoxon_signed_rank(x, y)
    assert res.p_two_sided == pytest.approx(brute_wilcoxon_p(x, y), abs=1e-12)


def test_wilcoxon_normal_branch_reasonable():
    rng = np.random.default_rng(3)
    x = rng.normal(size=40)
    y = x + rng.normal(scale=0.05, size=40) + 0.8  # strong shift
    res = wilcoxon_signed_rank(x, y)
    assert res.method == "normal"
    assert res.p_two_sided < 1e-5


def test_bh_worked_example():
    assert bh_adjust([0.01, 0.02, 0.03, 0.04]) == pytest.approx(
        [0.04, 0.04, 0.04, 0.04])


def test_bh_single_value_identity():
    assert bh_adjust([0.37]) == pytest.approx([0.37])


def test_bh_order_restored_and_monotone():
    p = [0.5, 0.001, 0.04, 0.9]
    q = bh_adjust(p)
    # adjusted values keep the original positions
    assert q[1] == min(q)
    srt = sorted(zip(p, q))
    assert all(a[1] <= b[1] for a, b in zip(srt, srt[1:]))


def test_bh_rejects_out_of_range():
    with pytest.raises(InvalidInput):
        bh_adjust([0.0, 0.5])
    with pytest.raises(InvalidInput):
        bh_adjust([0.5, 1.5])


def bh_reference(p):
    p = np.asarray(p, float)
    m = len(p)
    order = np.argsort(p, kind="stable")
    q = [p[order[i]] * m / (i + 1) for i in range(m)]
    for i in range(m - 2, -1, -1):
        q[i] = min(q[i], q[i + 1])
    out = np.empty(m)
    out[order] = np.minimum(q, 1.0)
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
def test_bh_matches_reference(seed, m):
    rng = np.random.default_rng(seed)
    p = rng.uniform(1e-6, 1.0, size=m)
    assert bh_adjust(p) == pytest.approx(bh_reference(p).tolist(), abs=1e-12)


# ---------------------------------------------------------------- ranking

def three_encoder_case():
    """A clearly better encoder plus two statistically inseparable ones.

    charlie's offsets from bravo are symmetric (+/-1e-3 alternating with
    equal magnitudes), so the paired signed-rank test sees no shift even
    though charlie's mean is nudged infinitesimally above bravo's.
    """
    base = np.linspace(0.60, 0.70, 20)
    wiggle = np.where(np.arange(20) % 2 == 0, 1e-3, -1e-3)
    return {
        "alpha": (base + 0.25).tolist(),              # clear winner
        "bravo": base.tolist(),
        "charlie": (base + wiggle + 1e-9).tolist(),   # inseparable from bravo
    }


def test_pairwise_tests_keys_and_bh_family():
    tests = pairwise_tests(three_encoder_case())
    assert set(tests.adjusted) == {("alpha", "bravo"), ("alpha", "charlie"),
                                   ("bravo", "charlie")}
    # BH never lowers a p-value below the raw minimum
    for k in tests.adjusted:
        assert tests.adjusted[k] >= tests.raw[k] - 1e-15


def test_rank_sharing_on_indistinguishable_pair():
    dist = three_encoder_case()
    ranks = rank_with_significance(dist)
    assert ranks["alpha"] == 1
    assert ranks["bravo"] == ranks["charlie"] == 2


def test_rank_lower_better_flips_order():
    dist = three_encoder_case()
    ranks = rank_with_significance(dist, higher_better=False)
    assert ranks["alpha"] == 2
    assert ranks["bravo"] == ranks["charlie"] == 1


def test_win_tie_loss_semantics():
    dist = three_encoder_case()
    assert win_tie_loss(dist, "alpha") == "win"
    assert win_tie_loss(dist, "bravo") == "loss"   # vs alpha, significant
    tests = pairwise_tests(dist)
    assert tests.p("bravo", "charlie") >= 0.05


def test_significance_matrix_signs_and_buckets():
    dist = three_encoder_case()
    m = significance_matrix(dist)
    assert ("alpha", "alpha") not in m  # diagonal excluded
    assert m[("alpha", "bravo")]["sign"] == "+"
    assert m[("bravo", "alpha")]["sign"] == "-"
    assert m[("bravo", "charlie")]["sign"] == "none"
    assert m[("alpha", "bravo")]["bucket"] == "p<0.01"


def test_compare_encoders_mean_rank_recomputes():
    per_task = {"t1": three_encoder_case(),
                "t2": {k: list(reversed(v))
                       for k, v in three_encoder_case().items()}}
    report = compare_encoders(per_task, {"t1": "auc", "t2": "auc"})
    for enc in report.encoders:
        expected = np.mean([report.ranks[t][enc] for t in report.tasks])
        assert report.overall_mean_rank[enc] == pytest.approx(expected)
    assert report.metadata["bh_family"] == "per-task"


def test_degenerate_pair_counts_as_no_evidence():
    dist = {"a": [0.5] * 20, "b": [0.5] * 20, "c": [0.9] * 19 + [0.1]}
    tests = pairwise_tests(dist)
    assert ("a", "b") in tests.degenerate
    assert tests.raw[("a", "b")] == 1.0
