"""Gold labels from per-annotator records.

Rule-based strategies threshold the yes-votes per dimension, then re-apply the
taxonomy closure so the result stays hierarchical. MACE lives in app.core.mace.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, TYPE_CHECKING, Iterable

import numpy as np

from app.core.stats import AlphaResult, krippendorff_alpha
from app.core.taxonomy import (
    CORE_DIMENSIONS,
    DIMENSION_ORDER,
    SUB_DIMENSIONS,
    AnnotationRecord,
    DimensionId,
    TaxonomyError,
    dimension,
    is_inappropriate,
)
from app.core.votes import MISSING, VoteTensor, build_votes

if TYPE_CHECKING:
    from app.core.mace import MaceModel

logger = logging.getLogger(__name__)


class AggregationError(ValueError):
    pass


class Strategy(str, Enum):
    LIBERAL = "liberal"
    MAJORITY = "majority"
    CONSERVATIVE = "conservative"


RULE_STRATEGIES: tuple[Strategy, ...] = (Strategy.LIBERAL, Strategy.MAJORITY, Strategy.CONSERVATIVE)
PROVENANCES = {"liberal", "majority", "conservative", "mace"}

_INDEX = {d: i for i, d in enumerate(DIMENSION_ORDER)}


def binarize_in(rating: int) -> bool:
    """1 and 2 are inappropriate (yes), 3 is not."""
    try:
        return is_inappropriate(rating)
    except TaxonomyError as e:
        raise AggregationError(str(e)) from e


@dataclass(frozen=True)
class LabelMatrix:
    argument_ids: tuple[str, ...]
    # n x 14, values 0/1, IN binarized
    values: np.ndarray
    provenance: str

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.argument_ids), len(DIMENSION_ORDER)):
            raise AggregationError("label matrix shape does not match its argument ids")
        if self.provenance not in PROVENANCES:
            raise AggregationError(f"unknown provenance: {self.provenance!r}")

    def __len__(self) -> int:
        return len(self.argument_ids)

    def column(self, dim: DimensionId | str) -> np.ndarray:
        return self.values[:, _INDEX[DimensionId(dim)]]

    def yes_count(self, dim: DimensionId | str) -> int:
        return int(self.column(dim).sum())

    def row(self, argument_id: str) -> dict[DimensionId, bool]:
        i = self.argument_ids.index(argument_id)
        return {d: bool(self.values[i, k]) for k, d in enumerate(DIMENSION_ORDER)}

    def reindex(self, argument_ids: Iterable[str]) -> "LabelMatrix":
        index = {a: i for i, a in enumerate(self.argument_ids)}
        wanted = list(argument_ids)
        missing = [a for a in wanted if a not in index]
        if missing:
            raise AggregationError(f"{len(missing)} arguments have no labels (first: {missing[0]})")
        return LabelMatrix(tuple(wanted), self.values[[index[a] for a in wanted]], self.provenance)

    def is_closed(self) -> bool:
        return bool(np.array_equal(close_matrix(self.values), self.values))

    def to_tsv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
        writer.writerow(["argument_id", *(d.value for d in DIMENSION_ORDER), "provenance"])
        for a, row in zip(self.argument_ids, self.values):
            writer.writerow([a, *(int(v) for v in row), self.provenance])

    @classmethod
    def from_tsv(cls, stream: IO[str]) -> "LabelMatrix":
        reader = csv.DictReader(stream, delimiter="\t")
        expected = ["argument_id", *(d.value for d in DIMENSION_ORDER), "provenance"]
        if reader.fieldnames is None or [c for c in expected if c not in reader.fieldnames]:
            raise AggregationError("label file needs columns: " + " ".join(expected))
        ids: list[str] = []
        rows: list[list[int]] = []
        provenance: str | None = None
        for row in reader:
            ids.append(row["argument_id"])
            try:
                rows.append([int(row[d.value]) for d in DIMENSION_ORDER])
            except ValueError as e:
                raise AggregationError(f"line {reader.line_num}: label cells must be 0 or 1") from e
            if provenance is None:
                provenance = row["provenance"]
            elif row["provenance"] != provenance:
                raise AggregationError(f"line {reader.line_num}: mixed provenance in one label file")
        values = np.array(rows, dtype=np.int8).reshape(len(rows), len(DIMENSION_ORDER))
        if not np.isin(values, (0, 1)).all():
            raise AggregationError("label cells must be 0 or 1")
        return cls(tuple(ids), values, provenance or "conservative")


def close_matrix(values: np.ndarray) -> np.ndarray:
    """Sub yes sets its core; any core yes sets IN."""
    out = values.copy()
    for s in SUB_DIMENSIONS:
        p = dimension(s).parent
        assert p is not None
        out[:, _INDEX[p]] |= out[:, _INDEX[s]]
    for c in CORE_DIMENSIONS:
        out[:, _INDEX[DimensionId.IN]] |= out[:, _INDEX[c]]
    return out


def _vote_counts(votes: VoteTensor, unequal: str) -> tuple[np.ndarray, np.ndarray]:
    n = votes.votes_per_item()
    if votes.n_items == 0:
        raise AggregationError("no records to aggregate")
    if unequal == "error":
        if np.unique(n).size > 1:
            raise AggregationError(f"arguments have unequal annotator counts ({int(n.min())}..{int(n.max())})")
        if int(n[0]) < 2:
            raise AggregationError("aggregation needs at least two annotators per argument")
    elif unequal != "per-argument":
        raise AggregationError("unequal must be 'error' or 'per-argument'")
    yes = (votes.binary == 1).sum(axis=1)
    return yes, n


def aggregate_strategy(
    data: VoteTensor | Iterable[AnnotationRecord],
    strategy: Strategy | str,
    *,
    unequal: str = "error",
) -> LabelMatrix:
    """Threshold yes-votes v out of n annotators per dimension.

    conservative: v >= 1; majority: v >= ceil((n + 1) / 2); liberal: v == n.
    """
    strategy = Strategy(strategy)
    votes = data if isinstance(data, VoteTensor) else build_votes(data)
    yes, n = _vote_counts(votes, unequal)
    n_col = n[:, None]
    if strategy is Strategy.CONSERVATIVE:
        labels = yes >= 1
    elif strategy is Strategy.MAJORITY:
        labels = yes >= np.ceil((n_col + 1) / 2.0)
    else:
        labels = yes == n_col
    values = close_matrix(labels.astype(np.int8))
    logger.debug("Aggregated %d arguments with %s strategy", votes.n_items, strategy.value)
    return LabelMatrix(votes.argument_ids, values, strategy.value)


def aggregate_in_rating(
    data: VoteTensor | Iterable[AnnotationRecord], strategy: Strategy | str
) -> dict[str, int]:
    """3-level IN per argument: conservative=min, liberal=max, majority=mode with >= 2 votes else median."""
    strategy = Strategy(strategy)
    votes = data if isinstance(data, VoteTensor) else build_votes(data)
    out: dict[str, int] = {}
    for a, row in zip(votes.argument_ids, votes.in_raw):
        present = sorted(int(v) for v in row if v != MISSING)
        if not present:
            raise AggregationError(f"argument {a} has no IN rating")
        if strategy is Strategy.CONSERVATIVE:
            out[a] = present[0]
        elif strategy is Strategy.LIBERAL:
            out[a] = present[-1]
        else:
            values, counts = np.unique(present, return_counts=True)
            best = int(counts.max())
            if best >= 2 and int((counts == best).sum()) == 1:
                out[a] = int(values[counts.argmax()])
            else:
                out[a] = int(math.floor(float(np.median(present))))
    return out


def compare_aggregations(first: LabelMatrix, second: LabelMatrix, metric: str = "nominal") -> dict[DimensionId, AlphaResult]:
    """Alpha per dimension, treating the two label sources as two annotators."""
    if set(first.argument_ids) != set(second.argument_ids):
        raise AggregationError("label matrices cover different arguments")
    other = second.reindex(first.argument_ids)
    out: dict[DimensionId, AlphaResult] = {}
    for d in DIMENSION_ORDER:
        table = np.stack([first.column(d), other.column(d)], axis=1)
        out[d] = krippendorff_alpha(table, metric)
    return out


def compare_strategies(
    data: VoteTensor | Iterable[AnnotationRecord], model: "MaceModel", *, threshold: float | None = None
) -> dict[Strategy, dict[DimensionId, AlphaResult]]:
    """Alpha of MACE labels against each rule strategy."""
    from app.core.mace import mace_labels

    votes = data if isinstance(data, VoteTensor) else build_votes(data)
    mace = mace_labels(model, threshold=threshold)
    return {s: compare_aggregations(mace, aggregate_strategy(votes, s)) for s in RULE_STRATEGIES}
