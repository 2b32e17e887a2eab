"""Significance-aware encoder comparison.

Per task: pairwise Wilcoxon signed-rank tests over paired per-split
metrics, Benjamini-Hochberg adjustment of the pairwise family, greedy
significance-shared ranking, win/tie/loss tallies against the best
competitor, and +/- significance matrices bucketed at p<0.01 and
0.01<=p<0.05.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DegeneratePair, InvalidInput

EXACT_LIMIT = 25  # exact enumeration up to this many nonzero differences
ALPHA = 0.05
HIGH_SIG = 0.01


@dataclass
class WilcoxonResult:
    W: float
    p_two_sided: float
    n_effective: int
    method: str  # "exact" | "normal"


def wilcoxon_signed_rank(x, y) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; |d| ranked with midranks. For
    n_effective <= 25 the p-value is exact: the distribution of the
    positive rank sum over all 2^n sign assignments of the realized rank
    multiset, evaluated by convolution (equivalent to full enumeration).
    Larger n uses a normal approximation with tie-corrected variance and
    continuity correction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInput("paired samples must be equal-length vectors")
    if len(x) < 5:
        raise InvalidInput("need at least 5 pairs")
    d = x - y
    d = d[d != 0.0]
    n = len(d)
    if n == 0:
        raise DegeneratePair("all paired differences are zero")
    absd = np.abs(d)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(n)
    sorted_abs = absd[order]
    tie_sizes = []
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        tie_sizes.append(j - i + 1)
        i = j + 1
    w_plus = float(ranks[d > 0].sum())
    total = float(ranks.sum())  # n(n+1)/2
    w = min(w_plus, total - w_plus)

    if n <= EXACT_LIMIT:
        # distribution of 2*W+ over sign assignments; midranks double to ints
        int_ranks = np.rint(2.0 * ranks).astype(np.int64)
        t2 = int(int_ranks.sum())
        dist = np.zeros(t2 + 1, dtype=np.float64)
        dist[0] = 1.0
        for r in int_ranks:
            dist[r:] += dist[:t2 + 1 - r]
        w2 = int(round(2.0 * w))
        lo = dist[:w2 + 1].sum()
        hi = dist[t2 - w2:].sum()
        count = lo + hi
        if 2 * w2 >= t2:  # the two tails overlap
            count = min(count, float(2 ** n))
        p = count / 2.0 ** n
        method = "exact"
    else:
        mu = n * (n + 1) / 4.0
        tie_term = sum(t ** 3 - t for t in tie_sizes) / 48.0
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
        z = (w - mu + 0.5) / math.sqrt(sigma2)
        p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
        method = "normal"
    p = min(max(p, math.ulp(0.0)), 1.0)
    return WilcoxonResult(W=w, p_two_sided=p, n_effective=n, method=method)


def bh_adjust(pvals) -> list[float]:
    """Benjamini-Hochberg step-up adjusted p-values (q = p*m/i, monotone
    from the largest down, capped at 1, original order restored)."""
    p = np.asarray(pvals, dtype=np.float64)
    if p.size == 0:
        return []
    if np.any(p <= 0) or np.any(p > 1):
        raise InvalidInput("p-values must be in (0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    adjusted = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(adjusted[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out.tolist()


@dataclass
class PairwiseTests:
    """Adjusted pairwise p-values for every encoder pair of one task."""
    encoders: list[str]
    adjusted: dict[tuple[str, str], float]  # key sorted (a, b), a < b
    raw: dict[tuple[str, str], float]
    degenerate: set = field(default_factory=set)

    def p(self, a: str, b: str) -> float:
        key = (a, b) if a < b else (b, a)
        return self.adjusted[key]


def pairwise_tests(distributions: dict[str, list[float]]) -> PairwiseTests:
    """Wilcoxon on every encoder pair, BH-adjusted within the task family.

    Degenerate pairs (identical distributions) carry p = 1 and are tallied
    separately: no evidence of difference.
    """
    encoders = sorted(distributions)
    if len(encoders) < 2:
        raise InvalidInput("need at least 2 encoders to compare")
    raw = {}
    degenerate = set()
    for a, b in combinations(encoders, 2):
        try:
            raw[(a, b)] = wilcoxon_signed_rank(distributions[a],
                                               distributions[b]).p_two_sided
        except DegeneratePair:
            raw[(a, b)] = 1.0
            degenerate.add((a, b))
    keys = sorted(raw)
    adjusted = dict(zip(keys, bh_adjust([raw[k] for k in keys])))
    return PairwiseTests(encoders=encoders, adjusted=adjusted, raw=raw,
                         degenerate=degenerate)


def _mean_order(distributions: dict[str, list[float]], higher_better: bool):
    """Encoders best-first by mean; lexicographic encoder_id on ties."""
    means = {e: float(np.mean(v)) for e, v in distributions.items()}
    sign = -1.0 if higher_better else 1.0
    return sorted(means, key=lambda e: (sign * means[e], e)), means


def rank_with_significance(distributions: dict[str, list[float]],
                           higher_better: bool = True,
                           alpha: float = ALPHA,
                           tests: PairwiseTests | None = None) -> dict[str, int]:
    """Greedy group-merge ranking: walk encoders best-first and start a
    new rank group when the adjusted p against the group's best member
    falls below alpha; encoders in one group share the group's ordinal."""
    if tests is None:
        tests = pairwise_tests(distributions)
    order, _ = _mean_order(distributions, higher_better)
    ranks: dict[str, int] = {}
    group_rank = 0
    group_best: str | None = None
    for enc in order:
        if group_best is None or tests.p(enc, group_best) < alpha:
            group_rank += 1
            group_best = enc
        ranks[enc] = group_rank
    return ranks


def win_tie_loss(distributions: dict[str, list[float]], focal: str,
                 higher_better: bool = True, alpha: float = ALPHA,
                 tests: PairwiseTests | None = None) -> str:
    """Verdict for ``focal`` against the best non-focal encoder by mean."""
    if tests is None:
        tests = pairwise_tests(distributions)
    competitors = {e: v for e, v in distributions.items() if e != focal}
    order, means = _mean_order(competitors, higher_better)
    best = order[0]
    focal_mean = float(np.mean(distributions[focal]))
    p = tests.p(focal, best)
    if p >= alpha:
        return "tie"
    focal_better = (focal_mean > means[best]) if higher_better \
        else (focal_mean < means[best])
    return "win" if focal_better else "loss"


def significance_matrix(distributions: dict[str, list[float]],
                        higher_better: bool = True,
                        tests: PairwiseTests | None = None) -> dict:
    """Entry (row, col): '+' if row significantly better, '-' if worse,
    bucketed by adjusted p (p<0.01 vs 0.01<=p<0.05); diagonal excluded."""
    if tests is None:
        tests = pairwise_tests(distributions)
    _, means = _mean_order(distributions, higher_better)
    matrix = {}
    for row in tests.encoders:
        for col in tests.encoders:
            if row == col:
                continue
            p = tests.p(row, col)
            if p >= ALPHA or means[row] == means[col]:
                matrix[(row, col)] = {"sign": "none", "bucket": "ns", "p_adj": p}
                continue
            row_better = (means[row] > means[col]) if higher_better \
                else (means[row] < means[col])
            matrix[(row, col)] = {
                "sign": "+" if row_better else "-",
                "bucket": "p<0.01" if p < HIGH_SIG else "0.01<=p<0.05",
                "p_adj": p,
            }
    return matrix


@dataclass
class ComparisonReport:
    tasks: list[str]
    encoders: list[str]
    metric_kind: dict[str, str]            # task -> "auc" | "rmse"
    means: dict[str, dict[str, float]]     # task -> encoder -> mean metric
    ranks: dict[str, dict[str, int]]       # task -> encoder -> rank
    adjusted_p: dict[str, dict[str, float]]  # task -> "a|b" -> p_adj
    overall_mean_rank: dict[str, float]
    wtl: dict[str, dict[str, int]]         # encoder -> {win, tie, loss}
    sig: dict[str, dict[str, dict]]        # task -> "row|col" -> entry
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "tasks": self.tasks, "encoders": self.encoders,
            "metric_kind": self.metric_kind, "means": self.means,
            "ranks": self.ranks, "adjusted_p": self.adjusted_p,
            "overall_mean_rank": self.overall_mean_rank, "win_tie_loss": self.wtl,
            "significance": self.sig, "metadata": self.metadata,
        }, sort_keys=True, indent=1)


def compare_encoders(per_task: dict[str, dict[str, list[float]]],
                     metric_kind: dict[str, str],
                     alpha: float = ALPHA,
                     metadata: dict | None = None) -> ComparisonReport:
    """Assemble the full report from per-task per-encoder distributions."""
    tasks = sorted(per_task)
    encoders = sorted({e for d in per_task.values() for e in d})
    means, ranks, adj, sig = {}, {}, {}, {}
    wtl = {e: {"win": 0, "tie": 0, "loss": 0} for e in encoders}
    for task in tasks:
        dist = per_task[task]
        higher = metric_kind[task] != "rmse"
        tests = pairwise_tests(dist)
        means[task] = {e: float(np.mean(v)) for e, v in dist.items()}
        ranks[task] = rank_with_significance(dist, higher, alpha, tests)
        adj[task] = {f"{a}|{b}": p for (a, b), p in tests.adjusted.items()}
        matrix = significance_matrix(dist, higher, tests)
        sig[task] = {f"{r}|{c}": entry for (r, c), entry in matrix.items()}
        for enc in dist:
            wtl[enc][win_tie_loss(dist, enc, higher, alpha, tests)] += 1
    overall = {}
    for enc in encoders:
        enc_ranks = [ranks[t][enc] for t in tasks if enc in ranks[t]]
        overall[enc] = float(np.mean(enc_ranks)) if enc_ranks else float("nan")
    meta = {"zero_differences": "dropped", "bh_family": "per-task",
            "alpha": alpha, "multiclass_auc": "macro one-vs-rest"}
    meta.update(metadata or {})
    return ComparisonReport(tasks=tasks, encoders=encoders,
                            metric_kind=metric_kind, means=means, ranks=ranks,
                            adjusted_p=adj, overall_mean_rank=overall,
                            wtl=wtl, sig=sig, metadata=meta)


def write_report_files(report: ComparisonReport, out_dir: str | Path,
                       header_comment: str | None = None) -> None:
    """report.json plus plot-ready rank_heatmap.csv / sig_matrix.csv /
    win_tie_loss.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    prefix = f"# {header_comment}\n" if header_comment else ""
    with open(out_dir / "rank_heatmap.csv", "w", encoding="utf-8") as fh:
        fh.write(prefix + "task,encoder,mean,rank\n")
        for task in report.tasks:
            for enc in sorted(report.means[task]):
                fh.write(f"{task},{enc},{report.means[task][enc]!r},"
                         f"{report.ranks[task][enc]}\n")
    with open(out_dir / "sig_matrix.csv", "w", encoding="utf-8") as fh:
        fh.write(prefix + "task,row,col,sign,p_adj\n")
        for task in report.tasks:
            for key in sorted(report.sig[task]):
                row, col = key.split("|")
                entry = report.sig[task][key]
                fh.write(f"{task},{row},{col},{entry['sign']},"
                         f"{entry['p_adj']!r}\n")
    with open(out_dir / "win_tie_loss.csv", "w", encoding="utf-8") as fh:
        fh.write(prefix + "encoder,win,tie,loss\n")
        for enc in report.encoders:
            t = report.wtl[enc]
            fh.write(f"{enc},{t['win']},{t['tie']},{t['loss']}\n")
