import itertools
import math

import numpy as np
import pytest

from app.core.stats import (
    StatsError,
    agreement_report,
    dimension_correlations,
    external_correlations,
    full_agreement,
    kendall_tau,
    krippendorff_alpha,
    mean_labels,
    mean_quality,
    pair_reason_correlations,
    pearson_r,
    quality_pearson,
    region_total,
    venn_overlap,
    wilcoxon_signed_rank,
)
from app.core.taxonomy import DimensionId
from app.core.votes import MISSING


def test_alpha_hand_example():
    table = [[0, 0], [1, 1], [0, 1], [1, 1]]
    result = krippendorff_alpha(table, "nominal")
    assert result.alpha == pytest.approx(16.0 / 30.0)
    assert not result.degenerate
    assert result.n_pairable == 8


def test_alpha_ignores_missing_and_singletons():
    table = [[0, 0], [1, 1], [0, 1], [1, 1], [1, MISSING]]
    assert krippendorff_alpha(table).alpha == pytest.approx(16.0 / 30.0)


def test_alpha_degenerate_and_errors():
    assert krippendorff_alpha([[0, 0], [0, 0]]).degenerate
    with pytest.raises(StatsError):
        krippendorff_alpha([[1, MISSING], [0, MISSING]])
    with pytest.raises(StatsError):
        krippendorff_alpha([[1, 2]], "ratio")


def test_ordinal_alpha_perfect_agreement():
    table = np.array([[1, 1, 1], [2, 2, 2], [3, 3, 3], [2, 2, 2]])
    assert krippendorff_alpha(table, "ordinal").alpha == pytest.approx(1.0)
    assert krippendorff_alpha(table, "interval").alpha == pytest.approx(1.0)


def test_full_agreement_on_fixture(fixture_store):
    records = fixture_store.records()
    assert full_agreement(records, "TE") == pytest.approx(500.0 / 6.0)
    assert full_agreement(records, DimensionId.IN) == pytest.approx(100.0 / 3.0)


def test_agreement_report_metrics(fixture_store):
    report = agreement_report(fixture_store.records())
    assert len(report.rows) == 14
    assert report.row("IN").metric == "ordinal"
    assert report.row("TE").metric == "nominal"
    assert report.row("UM").degenerate
    assert report.row("TE").annotators == 3


def test_tau_and_pearson():
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)
    assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert math.isnan(kendall_tau([1, 1, 1], [1, 2, 3]))
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    with pytest.raises(StatsError):
        kendall_tau([1], [1])
    with pytest.raises(StatsError):
        pearson_r([1, 2], [1, 2, 3])


def test_dimension_correlations_are_symmetric(fixture_store):
    matrix = dimension_correlations(fixture_store.records())
    assert matrix.values.shape == (14, 14)
    defined = ~np.isnan(matrix.values)
    assert np.allclose(matrix.values[defined], matrix.values.T[defined])
    assert matrix.get("TE", "TE") == pytest.approx(1.0)
    assert not matrix.is_defined("UM", "TE")


def test_external_correlation_orientation(fixture_store):
    means = mean_labels(fixture_store.records())
    quality = mean_quality(fixture_store.ratings())
    assert quality["credibility"]["arg1"] == pytest.approx(1.5)

    appr = external_correlations(means, quality, ["appropriateness"])
    assert appr.get("appropriateness", "IN") == pytest.approx(2.0 / math.sqrt(6.0))
    flipped = external_correlations(means, quality, ["appropriateness"], orient="inappropriateness")
    assert flipped.get("appropriateness", "IN") == pytest.approx(-2.0 / math.sqrt(6.0))
    with pytest.raises(StatsError):
        external_correlations(means, quality, ["appropriateness"], orient="sideways")


def test_pair_reason_correlations(fixture_store):
    means = mean_labels(fixture_store.records())
    matrix = pair_reason_correlations(fixture_store.pairs(), means)
    assert matrix.get("attacking-abusive", "TE") == pytest.approx(2.0 / math.sqrt(6.0))
    assert matrix.get("more-detailed", "TE") == pytest.approx(-2.0 / math.sqrt(6.0))
    assert not matrix.is_defined("irrelevant-reasons", "TE")


def test_quality_pearson(fixture_store):
    out = quality_pearson(fixture_store.ratings())
    assert set(out) == {"credibility", "emotional-appeal", "overall-quality"}
    assert out["overall-quality"] > 0.9
    with pytest.raises(StatsError):
        quality_pearson(fixture_store.ratings(), target="clarity")


def test_venn_overlap_cells(fixture_store):
    dims = ["appropriateness", "credibility", "emotional-appeal"]
    cells = venn_overlap(fixture_store.ratings(), dims)
    assert len(cells) == 8
    assert cells[frozenset({"appropriateness", "emotional-appeal"})] == 1
    assert cells[frozenset({"appropriateness", "credibility"})] == 1
    assert cells[frozenset()] == 1
    assert sum(cells.values()) == 3
    assert region_total(cells, ["appropriateness"]) == 2
    with pytest.raises(StatsError):
        venn_overlap(fixture_store.ratings(), ["clarity"])


def test_wilcoxon_exact_all_positive():
    a = np.arange(1, 26, dtype=float) + 0.5
    b = np.zeros(25)
    result = wilcoxon_signed_rank(a, b)
    assert result.method == "exact"
    assert result.n == 25
    assert result.p_value == pytest.approx(2.0 / 2**25)
    assert result.significant
    assert result.verdict == "significant"


def test_wilcoxon_exact_small_cases():
    # signs over ranks 1..3: |S| >= 4 in four of eight assignments
    result = wilcoxon_signed_rank([-1, 2, 3], [0, 0, 0])
    assert result.statistic == pytest.approx(4.0)
    assert result.p_value == pytest.approx(0.5)
    # tied magnitudes keep averaged ranks
    tied = wilcoxon_signed_rank([1, 1, 2], [0, 0, 0])
    assert tied.p_value == pytest.approx(0.25)
    assert not tied.significant


def test_wilcoxon_normal_path():
    a = np.arange(1, 31, dtype=float)
    result = wilcoxon_signed_rank(a, np.zeros(30))
    assert result.method == "normal"
    var = 30 * 31 * 61 / 24.0
    z = (465 - 232.5 - 0.5) / math.sqrt(var)
    assert result.p_value == pytest.approx(math.erfc(z / math.sqrt(2.0)))


def test_wilcoxon_without_differences_is_untested():
    result = wilcoxon_signed_rank([0.5, 0.6], [0.5, 0.6])
    assert not result.tested
    assert result.p_value == 1.0
    assert result.verdict == "no-test"
    with pytest.raises(StatsError):
        wilcoxon_signed_rank([1, 2], [1])


def _alpha_by_pairs(table, metric):
    """Alpha from explicit value pairs: within items for D_o, across the pooled values for D_e."""
    units = [[v for v in row if v != MISSING] for row in table]
    units = [u for u in units if len(u) >= 2]
    pooled = [v for u in units for v in u]
    values = sorted(set(pooled))
    freq = {c: pooled.count(c) for c in values}

    def delta(c, k):
        if metric == "nominal":
            return 0.0 if c == k else 1.0
        lo, hi = min(c, k), max(c, k)
        between = sum(freq[g] for g in values if lo <= g <= hi)
        return (between - (freq[c] + freq[k]) / 2.0) ** 2

    observed = 0.0
    for u in units:
        for i, j in itertools.permutations(range(len(u)), 2):
            observed += delta(u[i], u[j]) / (len(u) - 1)
    expected = sum(delta(pooled[i], pooled[j]) for i, j in itertools.permutations(range(len(pooled)), 2))
    return 1.0 - (len(pooled) - 1) * observed / expected


@pytest.mark.parametrize("metric,scale", [("nominal", (0, 1)), ("nominal", (1, 2, 3)), ("ordinal", (1, 2, 3))])
def test_alpha_matches_pairwise_definition(metric, scale):
    rng = np.random.default_rng(len(scale) + len(metric))
    checked = 0
    for _ in range(40):
        table = rng.choice(scale, size=(int(rng.integers(3, 15)), int(rng.integers(2, 5))))
        table = np.where(rng.random(table.shape) < 0.2, MISSING, table)
        units = [[v for v in row if v != MISSING] for row in table]
        pooled = {v for u in units if len(u) >= 2 for v in u}
        if len(pooled) < 2:
            continue
        result = krippendorff_alpha(table, metric)
        assert not result.degenerate
        assert result.alpha == pytest.approx(_alpha_by_pairs(table.tolist(), metric))
        checked += 1
    assert checked > 20


def _tau_b_by_pairs(x, y):
    concordant = discordant = tied_x = tied_y = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        tied_x += dx == 0
        tied_y += dy == 0
        if dx * dy > 0:
            concordant += 1
        elif dx * dy < 0:
            discordant += 1
    pairs = len(x) * (len(x) - 1) / 2
    return (concordant - discordant) / math.sqrt((pairs - tied_x) * (pairs - tied_y))


def test_tau_b_matches_pair_enumeration():
    rng = np.random.default_rng(8)
    for _ in range(100):
        n = int(rng.integers(3, 30))
        x = rng.integers(1, 5, size=n).tolist()
        y = rng.integers(1, 4, size=n).tolist()
        if len(set(x)) == 1 or len(set(y)) == 1:
            assert math.isnan(kendall_tau(x, y))
            continue
        assert kendall_tau(x, y) == pytest.approx(_tau_b_by_pairs(x, y))


def _wilcoxon_by_signs(d):
    d = [v for v in d if v != 0]
    mags = sorted(abs(v) for v in d)
    # averaged 1-based rank of each magnitude
    rank = {m: (mags.index(m) + 1 + len(mags) - mags[::-1].index(m)) / 2.0 for m in mags}
    ranks = [rank[abs(v)] for v in d]
    observed = sum(r if v > 0 else -r for v, r in zip(d, ranks))
    hits = sum(
        abs(sum(s * r for s, r in zip(signs, ranks))) >= abs(observed) - 1e-9
        for signs in itertools.product((1, -1), repeat=len(ranks))
    )
    return observed, hits / 2 ** len(ranks)


def test_exact_wilcoxon_matches_sign_enumeration():
    rng = np.random.default_rng(13)
    for _ in range(60):
        n = int(rng.integers(1, 11))
        a = rng.integers(-4, 5, size=n).astype(float)
        b = np.zeros(n)
        if not a.any():
            continue
        statistic, p = _wilcoxon_by_signs(a.tolist())
        result = wilcoxon_signed_rank(a, b)
        assert result.method == "exact"
        assert result.statistic == pytest.approx(statistic)
        assert result.p_value == pytest.approx(p)
