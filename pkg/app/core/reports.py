"""Report tables shaped like the published ones, rendered as CSV, Markdown or JSON."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from app.core.aggregate import RULE_STRATEGIES, Strategy, aggregate_in_rating, aggregate_strategy, compare_strategies
from app.core.corpus import (
    GAQ_QUALITY_DIMENSIONS,
    PAIR_REASONS,
    SOURCE_GROUPS,
    THEORY_QUALITY_DIMENSIONS,
    Argument,
    CorpusReport,
    PairReason,
    QualityRating,
)
from app.core.evaluation import ScoreReport, SignificanceVerdict
from app.core.mace import MaceModel
from app.core.stats import (
    AgreementReport,
    CorrelationMatrix,
    agreement_report,
    dimension_correlations,
    external_correlations,
    mean_labels,
    mean_quality,
    pair_reason_correlations,
)
from app.core.taxonomy import DIMENSION_ORDER, AnnotationRecord, DimensionId, dimension
from app.core.votes import VoteTensor, build_votes

FORMATS = ("csv", "md", "json")

# Per-source appendix tables.
SOURCE_TABLES: dict[str, str] = {
    "table8": "ukpconvarg2",
    "table9": "gaq-debates",
    "table10": "gaq-qa",
    "table11": "gaq-reviews",
}


@dataclass(frozen=True)
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[list[Any]]


def fmt_value(value: Any) -> str:
    """Two decimals without the leading zero (.45, -.12, 1.00); undefined renders as .00."""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ".00"
        text = f"{value:.2f}"
        if text == "-0.00":
            return ".00"
        if text.startswith("0."):
            return text[1:]
        if text.startswith("-0."):
            return "-" + text[2:]
        return text
    if value is None:
        return ""
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def render(table: Table, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([fmt_value(v) for v in row])
        return buf.getvalue()
    if fmt == "md":
        lines = [f"**{table.title}**", "", "| " + " | ".join(table.columns) + " |"]
        lines.append("|" + "|".join(["---"] * len(table.columns)) + "|")
        for row in table.rows:
            lines.append("| " + " | ".join(fmt_value(v) for v in row) + " |")
        return "\n".join(lines) + "\n"
    if fmt == "json":
        payload = {
            "name": table.name,
            "title": table.title,
            "columns": table.columns,
            "rows": [[_json_value(v) for v in row] for row in table.rows],
        }
        return json.dumps(payload, indent=2, sort_keys=False) + "\n"
    raise ValueError(f"unsupported format: {fmt!r}")


def _votes(data: VoteTensor | Iterable[AnnotationRecord]) -> VoteTensor:
    return data if isinstance(data, VoteTensor) else build_votes(data)


def _matrix_table(name: str, title: str, matrix: CorrelationMatrix, row_names: dict[str, str] | None = None) -> Table:
    rows = []
    for i, label in enumerate(matrix.row_labels):
        rows.append([(row_names or {}).get(label, label), *(float(v) for v in matrix.values[i])])
    return Table(name, title, ["", *matrix.col_labels], rows)


# ---------------------------------------------------------------------------
# Corpus statistics (overall and per source)
# ---------------------------------------------------------------------------


def table1a(data: VoteTensor | Iterable[AnnotationRecord]) -> Table:
    votes = _votes(data)
    gold = aggregate_strategy(votes, Strategy.CONSERVATIVE, unequal="per-argument")
    fully = sum(1 for v in aggregate_in_rating(votes, Strategy.CONSERVATIVE).values() if v == 1)
    rows: list[list[Any]] = []
    for d in DIMENSION_ORDER:
        yes = gold.yes_count(d)
        rows.append([d.value, dimension(d).name, yes, len(gold) - yes, fully if d is DimensionId.IN else None])
    return Table(
        "table1a",
        "Conservatively aggregated counts per dimension",
        ["dimension", "name", "yes", "no", "fully_inappropriate"],
        rows,
    )


def table1b(data: VoteTensor | Iterable[AnnotationRecord] | AgreementReport) -> Table:
    report = data if isinstance(data, AgreementReport) else agreement_report(_votes(data))
    rows = [[r.dimension.value, round(r.full_agreement_pct, 1), float(r.alpha)] for r in report.rows]
    return Table("table1b", "Full agreement (%) and Krippendorff's alpha", ["dimension", "full_agreement", "alpha"], rows)


def table1c(data: VoteTensor | Iterable[AnnotationRecord]) -> Table:
    return _matrix_table(
        "table1c", "Kendall's tau between dimensions, averaged over annotators", dimension_correlations(_votes(data))
    )


def corpus_statistics(name: str, title: str, data: VoteTensor | Iterable[AnnotationRecord]) -> Table:
    """Counts, agreement and dimension correlations side by side."""
    votes = _votes(data)
    counts = table1a(votes)
    agreement = agreement_report(votes)
    tau = dimension_correlations(votes)
    codes = [d.value for d in DIMENSION_ORDER]
    rows = []
    for k, d in enumerate(DIMENSION_ORDER):
        a = agreement.row(d)
        rows.append(
            [d.value, counts.rows[k][2], counts.rows[k][3], round(a.full_agreement_pct, 1), float(a.alpha)]
            + [float(v) for v in tau.values[k]]
        )
    return Table(name, title, ["dimension", "yes", "no", "full_agreement", "alpha", *codes], rows)


def source_table(name: str, arguments: Sequence[Argument], data: VoteTensor | Iterable[AnnotationRecord]) -> Table:
    group = SOURCE_TABLES[name]
    sources = set(SOURCE_GROUPS[group])
    ids = [a.argument_id for a in arguments if a.source in sources]
    votes = _votes(data).subset(ids)
    return corpus_statistics(name, f"Corpus statistics for {group} ({votes.n_items} arguments)", votes)


def stats_table(report: CorpusReport) -> Table:
    rows: list[list[Any]] = []
    groups = [("all", report.total)] + list(report.groups.items())
    for label, g in groups:
        rows.append([label, g.arguments, g.issues, *g.genres.values(), g.mean_sentences])
    genre_cols = list(report.total.genres)
    return Table("stats", f"Corpus statistics grouped by {report.group_by}", ["group", "arguments", "issues", *genre_cols, "mean_sentences"], rows)


# ---------------------------------------------------------------------------
# Aggregation comparison
# ---------------------------------------------------------------------------


def table2(data: VoteTensor | Iterable[AnnotationRecord], model: MaceModel, threshold: float | None = None) -> Table:
    votes = _votes(data)
    compared = compare_strategies(votes, model, threshold=threshold)
    rows = [[d.value, *(float(compared[s][d].alpha) for s in RULE_STRATEGIES)] for d in DIMENSION_ORDER]
    return Table(
        "table2",
        "Krippendorff's alpha between MACE labels and each combination strategy",
        ["dimension", *(s.value for s in RULE_STRATEGIES)],
        rows,
    )


# ---------------------------------------------------------------------------
# External correlations
# ---------------------------------------------------------------------------


def _quality_table(
    name: str,
    title: str,
    data: VoteTensor | Iterable[AnnotationRecord],
    ratings: Iterable[QualityRating],
    corpus: str,
    order: Sequence[str],
    orient: str,
) -> Table:
    quality = mean_quality(ratings, corpus)
    dims = [d for d in order if d in quality] + sorted(d for d in quality if d not in order)
    matrix = external_correlations(mean_labels(_votes(data)), quality, dims, orient=orient)
    return _matrix_table(name, title, matrix)


def table3(data: VoteTensor | Iterable[AnnotationRecord], ratings: Iterable[QualityRating], orient: str = "appropriateness") -> Table:
    return _quality_table(
        "table3",
        "Kendall's tau of mean quality ratings with mean dimension labels (theory-based corpus)",
        data,
        ratings,
        "dagstuhl",
        THEORY_QUALITY_DIMENSIONS,
        orient,
    )


def table7(data: VoteTensor | Iterable[AnnotationRecord], ratings: Iterable[QualityRating], orient: str = "appropriateness") -> Table:
    return _quality_table(
        "table7",
        "Kendall's tau of mean quality ratings with mean dimension labels (GAQ corpus)",
        data,
        ratings,
        "gaq",
        GAQ_QUALITY_DIMENSIONS,
        orient,
    )


def table4(data: VoteTensor | Iterable[AnnotationRecord], pairs: Iterable[PairReason]) -> Table:
    matrix = pair_reason_correlations(pairs, mean_labels(_votes(data)), list(PAIR_REASONS))
    return _matrix_table(
        "table4", "Kendall's tau of comparison reasons with differences in mean labels", matrix, PAIR_REASONS
    )


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def table5(reports: Sequence[ScoreReport], verdicts: Sequence[SignificanceVerdict] = ()) -> Table:
    marks: dict[str, list[str]] = {}
    for v in verdicts:
        if v.significant and v.result.statistic > 0:
            marks.setdefault(v.first, []).append(f">{v.second}")
    rows = []
    for r in reports:
        rows.append(
            [
                r.approach,
                *(r.per_dimension[d] for d in DIMENSION_ORDER),
                r.macro,
                " ".join(marks.get(r.approach, [])),
            ]
        )
    return Table(
        "table5",
        "Two-class macro F1 per dimension (mean over folds)",
        ["approach", *(d.value for d in DIMENSION_ORDER), "macro", "significant"],
        rows,
    )
