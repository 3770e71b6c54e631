from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping


class TaxonomyError(ValueError):
    pass


class DimensionId(str, Enum):
    IN = "IN"
    TE = "TE"
    EI = "EI"
    ED = "ED"
    MC = "MC"
    MS = "MS"
    MO = "MO"
    MI = "MI"
    UM = "UM"
    MR = "MR"
    CR = "CR"
    OR = "OR"
    DO = "DO"
    RU = "RU"

    def __str__(self) -> str:
        return self.value


class ScaleKind(str, Enum):
    ORDINAL_3 = "ordinal-3"
    BINARY = "binary"


class Level(str, Enum):
    ROOT = "root"
    CORE = "core"
    SUB = "sub"


@dataclass(frozen=True)
class Dimension:
    id: DimensionId
    parent: DimensionId | None
    scale: ScaleKind
    level: Level
    name: str
    definition: str


# Table order. Codes are the wire/file vocabulary everywhere else.
_DIMENSIONS: tuple[Dimension, ...] = (
    Dimension(
        DimensionId.IN,
        None,
        ScaleKind.ORDINAL_3,
        Level.ROOT,
        "Inappropriateness",
        "The argument's language does not support credibility and emotions or is not proportional to the issue.",
    ),
    Dimension(
        DimensionId.TE,
        DimensionId.IN,
        ScaleKind.BINARY,
        Level.CORE,
        "Toxic Emotions",
        "The emotions appealed to are deceptive or their intensities do not provide room for critical evaluation of the issue by the reader.",
    ),
    Dimension(
        DimensionId.EI,
        DimensionId.TE,
        ScaleKind.BINARY,
        Level.SUB,
        "Excessive Intensity",
        "The emotions appealed to by an argument are unnecessarily strong for the discussed issue.",
    ),
    Dimension(
        DimensionId.ED,
        DimensionId.TE,
        ScaleKind.BINARY,
        Level.SUB,
        "Emotional Deception",
        "The emotions appealed to are used as deceptive tricks to win, derail, or end the discussion.",
    ),
    Dimension(
        DimensionId.MC,
        DimensionId.IN,
        ScaleKind.BINARY,
        Level.CORE,
        "Missing Commitment",
        "The issue is not taken seriously or openness to other's arguments is absent.",
    ),
    Dimension(
        DimensionId.MS,
        DimensionId.MC,
        ScaleKind.BINARY,
        Level.SUB,
        "Missing Seriousness",
        "The argument is either trolling others by suggesting (explicitly or implicitly) that the issue is not worthy "
        "of being discussed or does not contribute meaningfully to the discussion.",
    ),
    Dimension(
        DimensionId.MO,
        DimensionId.MC,
        ScaleKind.BINARY,
        Level.SUB,
        "Missing Openness",
        "The argument displays an unwillingness to consider arguments with opposing viewpoints and does not assess "
        "the arguments on their merits but simply rejects them out of hand.",
    ),
    Dimension(
        DimensionId.MI,
        DimensionId.IN,
        ScaleKind.BINARY,
        Level.CORE,
        "Missing Intelligibility",
        "The argument's meaning is unclear or irrelevant to the issue or its reasoning is not understandable.",
    ),
    Dimension(
        DimensionId.UM,
        DimensionId.MI,
        ScaleKind.BINARY,
        Level.SUB,
        "Unclear Meaning",
        "The argument's content is vague, ambiguous, or implicit, such that it remains unclear what is being said "
        "about the issue (it could also be an unrelated issue).",
    ),
    Dimension(
        DimensionId.MR,
        DimensionId.MI,
        ScaleKind.BINARY,
        Level.SUB,
        "Missing Relevance",
        "The argument does not discuss the issue, but derails the discussion implicitly towards a related issue or "
        "shifts completely towards a different issue.",
    ),
    Dimension(
        DimensionId.CR,
        DimensionId.MI,
        ScaleKind.BINARY,
        Level.SUB,
        "Confusing Reasoning",
        "The argument's components (claims and premises) seem not to be connected logically.",
    ),
    Dimension(
        DimensionId.OR,
        DimensionId.IN,
        ScaleKind.BINARY,
        Level.CORE,
        "Other Reasons",
        "The argument contains severe orthographic errors or is inappropriate for reasons not covered by any other dimension.",
    ),
    Dimension(
        DimensionId.DO,
        DimensionId.OR,
        ScaleKind.BINARY,
        Level.SUB,
        "Detrimental Orthography",
        "The argument has serious spelling and/or grammatical errors, negatively affecting its readability.",
    ),
    Dimension(
        DimensionId.RU,
        DimensionId.OR,
        ScaleKind.BINARY,
        Level.SUB,
        "Reason Unclassified",
        "There are any other reasons than those above for why the argument should be considered inappropriate.",
    ),
)

_BY_ID: dict[DimensionId, Dimension] = {d.id: d for d in _DIMENSIONS}

DIMENSION_ORDER: tuple[DimensionId, ...] = tuple(d.id for d in _DIMENSIONS)
FLAG_DIMENSIONS: tuple[DimensionId, ...] = DIMENSION_ORDER[1:]
CORE_DIMENSIONS: tuple[DimensionId, ...] = tuple(d.id for d in _DIMENSIONS if d.level is Level.CORE)
SUB_DIMENSIONS: tuple[DimensionId, ...] = tuple(d.id for d in _DIMENSIONS if d.level is Level.SUB)

IN_LABELS: dict[int, str] = {
    1: "fully inappropriate",
    2: "partially (in)appropriate",
    3: "fully appropriate",
}


def dimensions() -> list[Dimension]:
    return list(_DIMENSIONS)


def dimension(dim: DimensionId | str) -> Dimension:
    return _BY_ID[parse_dimension(dim)]


def parse_dimension(raw: DimensionId | str) -> DimensionId:
    if isinstance(raw, DimensionId):
        return raw
    try:
        return DimensionId(str(raw).strip().upper())
    except ValueError as e:
        raise TaxonomyError(f"unknown dimension code: {raw!r}") from e


def parent(dim: DimensionId | str) -> DimensionId | None:
    return dimension(dim).parent


def children(dim: DimensionId | str) -> list[DimensionId]:
    d = parse_dimension(dim)
    return [x.id for x in _DIMENSIONS if x.parent == d]


def core_dimensions() -> list[DimensionId]:
    return list(CORE_DIMENSIONS)


def sub_dimensions() -> list[DimensionId]:
    return list(SUB_DIMENSIONS)


def parse_flag(raw: Any) -> bool:
    """Binary cell value: 0/1, yes/no, true/false."""
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, int) and raw in (0, 1):
        return bool(raw)
    v = str(raw).strip().lower()
    if v in {"1", "yes", "y", "true"}:
        return True
    if v in {"0", "no", "n", "false"}:
        return False
    raise TaxonomyError(f"invalid binary value: {raw!r}")


def is_inappropriate(in_rating: int) -> bool:
    """Binarized IN: fully and partially inappropriate both count as yes."""
    if in_rating not in IN_LABELS:
        raise TaxonomyError(f"IN rating out of range: {in_rating!r}")
    return in_rating in (1, 2)


@dataclass(frozen=True)
class AnnotationRecord:
    argument_id: str
    annotator_id: str
    in_rating: int
    flags: Mapping[DimensionId, bool] = field(default_factory=dict)
    ru_free_text: str | None = None
    batch_id: str = ""
    submitted_at: str | None = None

    def binary(self, dim: DimensionId | str) -> bool:
        d = parse_dimension(dim)
        if d is DimensionId.IN:
            return is_inappropriate(self.in_rating)
        return bool(self.flags[d])

    def value(self, dim: DimensionId | str) -> int:
        d = parse_dimension(dim)
        if d is DimensionId.IN:
            return int(self.in_rating)
        return int(bool(self.flags[d]))

    def structural_errors(self) -> list[str]:
        errors: list[str] = []
        if not isinstance(self.in_rating, int) or isinstance(self.in_rating, bool) or self.in_rating not in IN_LABELS:
            errors.append(f"IN rating must be 1, 2 or 3 (got {self.in_rating!r})")
        for d in FLAG_DIMENSIONS:
            if d not in self.flags:
                errors.append(f"missing flag {d.value}")
            elif not isinstance(self.flags[d], bool):
                errors.append(f"flag {d.value} must be yes/no")
        for k in self.flags:
            if k not in FLAG_DIMENSIONS:
                errors.append(f"unexpected flag {k!r}")
        return errors


def make_record(
    *,
    argument_id: str,
    annotator_id: str,
    in_rating: int,
    yes: tuple[DimensionId | str, ...] | list[DimensionId | str] = (),
    ru_free_text: str | None = None,
    batch_id: str = "",
    submitted_at: str | None = None,
) -> AnnotationRecord:
    """Build a complete record where exactly the dimensions in `yes` are flagged."""
    yes_set = {parse_dimension(d) for d in yes}
    return AnnotationRecord(
        argument_id=argument_id,
        annotator_id=annotator_id,
        in_rating=in_rating,
        flags={d: d in yes_set for d in FLAG_DIMENSIONS},
        ru_free_text=ru_free_text,
        batch_id=batch_id,
        submitted_at=submitted_at,
    )


class ValidationMode(str, Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class Violation:
    rule: str
    dimension: DimensionId
    message: str


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: list[Violation]
    warnings: list[str]
    structural_errors: list[str]

    @property
    def structural(self) -> bool:
        return bool(self.structural_errors)


def validate(record: AnnotationRecord, mode: ValidationMode | str = ValidationMode.STRICT) -> ValidationResult:
    mode = ValidationMode(mode)

    structural = record.structural_errors()
    if structural:
        return ValidationResult(ok=False, violations=[], warnings=[], structural_errors=structural)

    violations: list[Violation] = []
    warnings: list[str] = []
    flags = record.flags

    for d in SUB_DIMENSIONS:
        p = _BY_ID[d].parent
        assert p is not None
        if flags[d] and not flags[p]:
            violations.append(
                Violation("sub_without_parent", d, f"{d.value} is yes but its core dimension {p.value} is no")
            )

    if mode is ValidationMode.STRICT:
        inappropriate = is_inappropriate(record.in_rating)
        for c in CORE_DIMENSIONS:
            if flags[c] and not inappropriate:
                violations.append(
                    Violation(
                        "core_without_inappropriateness",
                        c,
                        f"{c.value} is yes but the argument is rated fully appropriate",
                    )
                )
        if inappropriate and not any(flags[c] for c in CORE_DIMENSIONS):
            violations.append(
                Violation(
                    "inappropriate_without_reason",
                    DimensionId.IN,
                    "select a reason (core dimension) for an inappropriate argument",
                )
            )
        if record.ru_free_text and record.ru_free_text.strip() and not flags[DimensionId.RU]:
            violations.append(
                Violation("ru_text_without_ru", DimensionId.RU, "free-text reason given but RU is no")
            )

    for c in CORE_DIMENSIONS:
        if flags[c] and not any(flags[s] for s in children(c)):
            warnings.append(f"{c.value} is yes without any sub-dimension")

    return ValidationResult(ok=not violations, violations=violations, warnings=warnings, structural_errors=[])


def close(record: AnnotationRecord) -> AnnotationRecord:
    """Propagate every yes upwards; never turns a yes into a no."""
    structural = record.structural_errors()
    if structural:
        raise TaxonomyError("cannot close a malformed record: " + "; ".join(structural))

    flags = {d: bool(record.flags[d]) for d in FLAG_DIMENSIONS}
    for d in SUB_DIMENSIONS:
        if flags[d]:
            p = _BY_ID[d].parent
            assert p is not None
            flags[p] = True

    in_rating = record.in_rating
    if in_rating == 3 and any(flags[c] for c in CORE_DIMENSIONS):
        in_rating = 2

    return replace(record, flags=flags, in_rating=in_rating)
