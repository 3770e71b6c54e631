from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as sps

from app.core.corpus import DEFAULT_RATING_SCALE, PAIR_REASONS, RATING_SCALES, PairReason, QualityRating
from app.core.taxonomy import DIMENSION_ORDER, AnnotationRecord, DimensionId
from app.core.votes import MISSING, VoteTensor, build_votes

logger = logging.getLogger(__name__)

EXACT_WILCOXON_MAX_N = 25


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class AlphaResult:
    alpha: float
    degenerate: bool
    n_pairable: int
    metric: str = "nominal"


@dataclass(frozen=True)
class AgreementRow:
    dimension: DimensionId
    full_agreement_pct: float
    alpha: float
    metric: str
    degenerate: bool
    annotators: int
    items: int


@dataclass(frozen=True)
class AgreementReport:
    rows: list[AgreementRow]

    def row(self, dim: DimensionId | str) -> AgreementRow:
        for r in self.rows:
            if r.dimension == dim:
                return r
        raise KeyError(dim)


@dataclass(frozen=True)
class CorrelationMatrix:
    row_labels: list[str]
    col_labels: list[str]
    values: np.ndarray
    method: str

    def get(self, row: str, col: str) -> float:
        return float(self.values[self.row_labels.index(str(row)), self.col_labels.index(str(col))])

    def is_defined(self, row: str, col: str) -> bool:
        return not math.isnan(self.get(row, col))


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    significant: bool
    tested: bool
    n: int
    method: str

    @property
    def verdict(self) -> str:
        if not self.tested:
            return "no-test"
        return "significant" if self.significant else "not significant"


def _as_votes(data: VoteTensor | Iterable[AnnotationRecord]) -> VoteTensor:
    return data if isinstance(data, VoteTensor) else build_votes(data)


# ---------------------------------------------------------------------------
# Agreement
# ---------------------------------------------------------------------------


def full_agreement(data: VoteTensor | Iterable[AnnotationRecord], dim: DimensionId | str) -> float:
    """Percent of items on which every present label is identical (IN on its 3-level scale)."""
    votes = _as_votes(data)
    col = votes.raw_column(DimensionId(dim))
    agree = 0
    items = 0
    for row in col:
        present = row[row != MISSING]
        if present.size == 0:
            continue
        items += 1
        agree += int(np.all(present == present[0]))
    if items == 0:
        raise StatsError("full agreement needs at least one annotated item")
    return 100.0 * agree / items


def _delta2(values: np.ndarray, marginals: np.ndarray, metric: str) -> np.ndarray:
    k = len(values)
    if metric == "nominal":
        return 1.0 - np.eye(k)
    if metric == "interval":
        diff = values[:, None] - values[None, :]
        return diff.astype(float) ** 2
    if metric == "ordinal":
        cum = np.concatenate([[0.0], np.cumsum(marginals)])
        d = np.zeros((k, k))
        for c in range(k):
            for e in range(c, k):
                span = cum[e + 1] - cum[c] - (marginals[c] + marginals[e]) / 2.0
                d[c, e] = d[e, c] = span**2
        return d
    raise StatsError(f"unknown metric: {metric!r}")


def krippendorff_alpha(table: np.ndarray | Sequence[Sequence[float]], metric: str = "nominal", missing: float = MISSING) -> AlphaResult:
    """Coincidence-matrix alpha over an items x annotators table.

    Cells equal to `missing` (or NaN) are ignored; items with fewer than two
    labels do not contribute.
    """
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2:
        raise StatsError("alpha expects an items x annotators table")
    present = ~(np.isnan(arr) | (arr == missing))
    values = np.unique(arr[present])

    index = {v: i for i, v in enumerate(values)}
    counts = np.zeros((arr.shape[0], len(values)))
    for u in range(arr.shape[0]):
        for v in arr[u][present[u]]:
            counts[u, index[v]] += 1
    m = counts.sum(axis=1)
    pairable = m >= 2
    if not pairable.any():
        raise StatsError("no item carries two or more labels")

    counts = counts[pairable]
    m = m[pairable]
    o = np.einsum("uc,uk->ck", counts / (m - 1)[:, None], counts) - np.diag((counts / (m - 1)[:, None]).sum(axis=0))
    n_c = o.sum(axis=1)
    n = float(n_c.sum())

    delta = _delta2(values, n_c, metric)
    d_e = float((np.outer(n_c, n_c) * delta).sum())
    if d_e == 0.0:
        return AlphaResult(alpha=1.0, degenerate=True, n_pairable=int(n), metric=metric)
    d_o = float((o * delta).sum())
    return AlphaResult(alpha=1.0 - (n - 1.0) * d_o / d_e, degenerate=False, n_pairable=int(n), metric=metric)


def agreement_report(
    data: VoteTensor | Iterable[AnnotationRecord], metrics: Mapping[DimensionId, str] | None = None
) -> AgreementReport:
    votes = _as_votes(data)
    metrics = dict(metrics or {})
    rows: list[AgreementRow] = []
    for d in DIMENSION_ORDER:
        metric = metrics.get(d, "ordinal" if d is DimensionId.IN else "nominal")
        result = krippendorff_alpha(votes.raw_column(d), metric)
        if result.degenerate:
            logger.warning("Alpha for %s is degenerate (no expected disagreement)", d.value)
        rows.append(
            AgreementRow(
                dimension=d,
                full_agreement_pct=full_agreement(votes, d),
                alpha=result.alpha,
                metric=metric,
                degenerate=result.degenerate,
                annotators=votes.n_annotators,
                items=votes.n_items,
            )
        )
    return AgreementReport(rows=rows)


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------


def _check_pair(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise StatsError("correlation needs two equal-length sequences")
    if xa.size < 2:
        raise StatsError("correlation needs at least two observations")
    return xa, ya


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Tau-b. NaN when either side is entirely tied."""
    xa, ya = _check_pair(x, y)
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        return float("nan")
    return float(sps.kendalltau(xa, ya, variant="b").statistic)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    xa, ya = _check_pair(x, y)
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        return float("nan")
    return float(sps.pearsonr(xa, ya).statistic)


def _nanmean_stack(mats: list[np.ndarray]) -> np.ndarray:
    stack = np.stack(mats)
    defined = ~np.isnan(stack)
    total = np.where(defined, stack, 0.0).sum(axis=0)
    n = defined.sum(axis=0)
    out = np.full(total.shape, np.nan)
    np.divide(total, n, out=out, where=n > 0)
    return out


def dimension_correlations(data: VoteTensor | Iterable[AnnotationRecord]) -> CorrelationMatrix:
    """14 x 14 tau-b per annotator over their own items, averaged element-wise."""
    votes = _as_votes(data)
    k = len(DIMENSION_ORDER)
    per_annotator: list[np.ndarray] = []
    for j in range(votes.n_annotators):
        labelled = votes.in_raw[:, j] != MISSING
        if labelled.sum() < 2:
            logger.warning("Annotator %s has fewer than two items; skipped", votes.annotator_ids[j])
            continue
        labels = votes.binary[labelled, j, :]
        mat = np.full((k, k), np.nan)
        for a in range(k):
            for b in range(a, k):
                mat[a, b] = mat[b, a] = kendall_tau(labels[:, a], labels[:, b])
        per_annotator.append(mat)
    if not per_annotator:
        raise StatsError("no annotator has enough items for correlations")
    codes = [d.value for d in DIMENSION_ORDER]
    return CorrelationMatrix(codes, list(codes), _nanmean_stack(per_annotator), "per-annotator-averaged")


def mean_labels(data: VoteTensor | Iterable[AnnotationRecord]) -> dict[str, np.ndarray]:
    """Per-argument mean of each binary label (IN binarized before averaging)."""
    votes = _as_votes(data)
    out: dict[str, np.ndarray] = {}
    for i, a in enumerate(votes.argument_ids):
        row = votes.binary[i]
        present = row[:, 0] != MISSING
        if present.any():
            out[a] = row[present].astype(float).mean(axis=0)
    return out


def mean_quality(ratings: Iterable[QualityRating], corpus: str = "dagstuhl") -> dict[str, dict[str, float]]:
    """dimension name -> argument_id -> mean score."""
    sums: dict[str, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    for r in ratings:
        if r.corpus == corpus:
            sums[r.dimension_name][r.argument_id].append(r.score)
    return {dim: {a: float(np.mean(v)) for a, v in by_arg.items()} for dim, by_arg in sums.items()}


def external_correlations(
    label_means: Mapping[str, np.ndarray],
    quality_means: Mapping[str, Mapping[str, float]],
    quality_dimensions: Sequence[str] | None = None,
    *,
    orient: str = "appropriateness",
) -> CorrelationMatrix:
    """Tau-b between mean quality ratings (rows) and mean labels (columns).

    With orient="appropriateness" the label side is read as 1 - mean, so a good
    quality score lining up with few inappropriateness votes is positive.
    """
    if orient not in ("appropriateness", "inappropriateness"):
        raise StatsError(f"unknown orientation: {orient!r}")
    dims = list(quality_dimensions) if quality_dimensions is not None else sorted(quality_means)
    values = np.full((len(dims), len(DIMENSION_ORDER)), np.nan)
    any_overlap = False
    for r, qdim in enumerate(dims):
        if qdim not in quality_means:
            raise StatsError(f"no ratings for quality dimension {qdim!r}")
        shared = [a for a in quality_means[qdim] if a in label_means]
        if len(shared) < 2:
            continue
        any_overlap = True
        q = [quality_means[qdim][a] for a in shared]
        labels = np.stack([label_means[a] for a in shared])
        if orient == "appropriateness":
            labels = 1.0 - labels
        for c in range(len(DIMENSION_ORDER)):
            values[r, c] = kendall_tau(q, labels[:, c])
    if not any_overlap:
        raise StatsError("labelled and rated arguments do not intersect")
    return CorrelationMatrix(dims, [d.value for d in DIMENSION_ORDER], values, f"pooled ({orient})")


def pair_reason_correlations(
    pairs: Iterable[PairReason], label_means: Mapping[str, np.ndarray], reasons: Sequence[str] | None = None
) -> CorrelationMatrix:
    """Tau-b between "pair carries reason" and mean(b) - mean(a) per dimension.

    a is the more convincing argument, b the less convincing one.
    """
    pairs = list(pairs)
    reasons = list(reasons) if reasons is not None else list(PAIR_REASONS)
    endpoints: dict[str, tuple[str, str]] = {}
    carried: dict[str, set[str]] = defaultdict(set)
    for p in pairs:
        if p.more_convincing_id in label_means and p.less_convincing_id in label_means:
            endpoints.setdefault(p.pair_id, (p.more_convincing_id, p.less_convincing_id))
            carried[p.pair_id].add(p.reason_code)
    if len(endpoints) < 2:
        raise StatsError("need at least two pairs whose arguments both carry labels")

    pair_ids = list(endpoints)
    diff = np.stack([label_means[endpoints[pid][1]] - label_means[endpoints[pid][0]] for pid in pair_ids])
    values = np.full((len(reasons), len(DIMENSION_ORDER)), np.nan)
    for r, reason in enumerate(reasons):
        indicator = [1.0 if reason in carried[pid] else 0.0 for pid in pair_ids]
        if not any(indicator):
            logger.warning("Reason %s never occurs; row undefined", reason)
            continue
        for c in range(len(DIMENSION_ORDER)):
            values[r, c] = kendall_tau(indicator, diff[:, c])
    return CorrelationMatrix(reasons, [d.value for d in DIMENSION_ORDER], values, "pooled over pairs")


def quality_pearson(
    ratings: Iterable[QualityRating], target: str = "appropriateness", corpus: str = "dagstuhl"
) -> dict[str, float]:
    """Pearson r between the target quality dimension and every other one, over mean ratings."""
    means = mean_quality(ratings, corpus)
    if target not in means:
        raise StatsError(f"no ratings for quality dimension {target!r}")
    out: dict[str, float] = {}
    for dim, by_arg in means.items():
        if dim == target:
            continue
        shared = [a for a in means[target] if a in by_arg]
        if len(shared) < 2:
            out[dim] = float("nan")
            continue
        out[dim] = pearson_r([means[target][a] for a in shared], [by_arg[a] for a in shared])
    return out


def venn_overlap(
    ratings: Iterable[QualityRating],
    dimensions: Sequence[str],
    *,
    corpus: str = "dagstuhl",
    low_threshold: float | None = None,
) -> dict[frozenset[str], int]:
    """Count arguments by the exact set of dimensions on which they are rated low.

    Every one of the 2^k cells is present, the empty set included. Arguments
    lacking a rating for any requested dimension are left out.
    """
    ratings = list(ratings)
    means = mean_quality(ratings, corpus)
    for d in dimensions:
        if d not in means:
            raise StatsError(f"unknown quality dimension {d!r}")
    threshold = low_threshold if low_threshold is not None else RATING_SCALES.get(corpus, DEFAULT_RATING_SCALE)[0]

    cells: dict[frozenset[str], int] = {}
    for k in range(len(dimensions) + 1):
        for combo in combinations(dimensions, k):
            cells[frozenset(combo)] = 0

    argument_ids: dict[str, None] = {}
    for r in ratings:
        if r.corpus == corpus:
            argument_ids.setdefault(r.argument_id, None)
    for a in argument_ids:
        if not all(a in means[d] for d in dimensions):
            continue
        low = frozenset(d for d in dimensions if means[d][a] <= threshold)
        cells[low] += 1
    return cells


def region_total(cells: Mapping[frozenset[str], int], required: Iterable[str]) -> int:
    need = frozenset(required)
    return sum(n for key, n in cells.items() if need <= key)


# ---------------------------------------------------------------------------
# Significance
# ---------------------------------------------------------------------------


def _exact_two_sided(doubled_ranks: list[int], observed: int) -> float:
    """P(|S| >= |observed|) for S = sum of +/- rank with equiprobable signs.

    Works on doubled ranks so averaged ranks stay integral.
    """
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    # S = 2 * T_plus - total
    t_plus = np.arange(total + 1)
    extreme = np.abs(2 * t_plus - total) >= abs(observed)
    hits = int(sum(counts[extreme]))
    return min(1.0, hits / float(2 ** len(doubled_ranks)))


def wilcoxon_signed_rank(a: Sequence[float], b: Sequence[float], alpha_level: float = 0.05) -> WilcoxonResult:
    """Signed statistic sum(sign(d) * rank|d|) with d = a - b.

    Zero differences are dropped and tied ranks averaged. Exact two-sided p up
    to 25 pairs, normal approximation with tie and continuity correction above.
    """
    xa = np.asarray(a, dtype=float)
    xb = np.asarray(b, dtype=float)
    if xa.shape != xb.shape or xa.ndim != 1:
        raise StatsError("wilcoxon needs two equal-length paired samples")
    d = xa - xb
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(statistic=0.0, p_value=1.0, significant=False, tested=False, n=0, method="none")

    ranks = sps.rankdata(np.abs(d), method="average")
    signs = np.sign(d)
    statistic = float((signs * ranks).sum())

    if n <= EXACT_WILCOXON_MAX_N:
        doubled = [int(round(2 * r)) for r in ranks]
        observed = int(round(2 * statistic))
        p = _exact_two_sided(doubled, observed)
        method = "exact"
    else:
        t_plus = float(ranks[signs > 0].sum())
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts**3) - tie_counts).sum()) / 48.0
        if var <= 0:
            p = 1.0
        else:
            z = max(abs(t_plus - mean) - 0.5, 0.0) / math.sqrt(var)
            p = min(1.0, 2.0 * float(sps.norm.sf(z)))
        method = "normal"

    return WilcoxonResult(
        statistic=statistic, p_value=p, significant=p < alpha_level, tested=True, n=n, method=method
    )
