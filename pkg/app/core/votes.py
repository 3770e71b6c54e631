"""Dense item x annotator x dimension view of annotation records.

Shared by the aggregation, MACE and agreement code so they all see the same
item/annotator ordering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from app.core.taxonomy import DIMENSION_ORDER, AnnotationRecord, DimensionId

MISSING = -1

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VoteTensor:
    argument_ids: tuple[str, ...]
    annotator_ids: tuple[str, ...]
    # items x annotators x 14, values 0/1 (IN binarized) or MISSING
    binary: np.ndarray
    # items x annotators, raw IN rating 1..3 or MISSING
    in_raw: np.ndarray

    @property
    def n_items(self) -> int:
        return len(self.argument_ids)

    @property
    def n_annotators(self) -> int:
        return len(self.annotator_ids)

    def column(self, dim: DimensionId) -> np.ndarray:
        """items x annotators for one dimension (IN binarized)."""
        return self.binary[:, :, DIMENSION_ORDER.index(dim)]

    def raw_column(self, dim: DimensionId) -> np.ndarray:
        """Like column() but IN on its 3-level scale."""
        if dim is DimensionId.IN:
            return self.in_raw
        return self.column(dim)

    def votes_per_item(self) -> np.ndarray:
        return (self.in_raw != MISSING).sum(axis=1)

    def subset(self, argument_ids: Iterable[str]) -> "VoteTensor":
        index = {a: i for i, a in enumerate(self.argument_ids)}
        wanted = [a for a in argument_ids if a in index]
        rows = [index[a] for a in wanted]
        binary = self.binary[rows]
        in_raw = self.in_raw[rows]
        # Drop annotators who labelled none of the kept items.
        keep = [j for j in range(self.n_annotators) if (in_raw[:, j] != MISSING).any()] if rows else []
        return VoteTensor(
            argument_ids=tuple(wanted),
            annotator_ids=tuple(self.annotator_ids[j] for j in keep),
            binary=binary[:, keep, :],
            in_raw=in_raw[:, keep],
        )


def build_votes(records: Iterable[AnnotationRecord]) -> VoteTensor:
    """Arguments and annotators keep first-seen order.

    A repeated (argument, annotator) pair keeps the later record and is logged.
    """
    records = list(records)
    argument_ids: dict[str, int] = {}
    annotator_ids: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    duplicates: list[tuple[str, str]] = []
    for r in records:
        key = (r.argument_id, r.annotator_id)
        if key in seen:
            duplicates.append(key)
        seen.add(key)
        argument_ids.setdefault(r.argument_id, len(argument_ids))
        annotator_ids.setdefault(r.annotator_id, len(annotator_ids))
    if duplicates:
        a, j = duplicates[0]
        logger.warning(
            "%d duplicate (argument, annotator) records; later records replace earlier ones (first: %s by %s)",
            len(duplicates),
            a,
            j,
        )

    binary = np.full((len(argument_ids), len(annotator_ids), len(DIMENSION_ORDER)), MISSING, dtype=np.int8)
    in_raw = np.full((len(argument_ids), len(annotator_ids)), MISSING, dtype=np.int8)
    for r in records:
        i = argument_ids[r.argument_id]
        j = annotator_ids[r.annotator_id]
        in_raw[i, j] = r.in_rating
        binary[i, j, :] = [int(r.binary(d)) for d in DIMENSION_ORDER]

    return VoteTensor(
        argument_ids=tuple(argument_ids),
        annotator_ids=tuple(annotator_ids),
        binary=binary,
        in_raw=in_raw,
    )
