from __future__ import annotations

import csv
import fcntl
import json
import logging
import os
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Any, Iterable, Iterator

from app.core.taxonomy import (
    DIMENSION_ORDER,
    FLAG_DIMENSIONS,
    AnnotationRecord,
    DimensionId,
    TaxonomyError,
    ValidationMode,
    close,
    dimension,
    parse_flag,
    validate,
)

logger = logging.getLogger(__name__)


class IngestError(RuntimeError):
    def __init__(self, message: str, *, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class Source(str, Enum):
    DAGSTUHL = "dagstuhl"
    UKPCONVARG2 = "ukpconvarg2"
    GAQ_DEBATES = "gaq-debates"
    GAQ_QA = "gaq-qa"
    GAQ_REVIEWS = "gaq-reviews"


class Genre(str, Enum):
    DEBATE = "debate"
    QA_FORUM = "qa-forum"
    REVIEW = "review"


GENRE_BY_SOURCE: dict[Source, Genre] = {
    Source.DAGSTUHL: Genre.DEBATE,
    Source.UKPCONVARG2: Genre.DEBATE,
    Source.GAQ_DEBATES: Genre.DEBATE,
    Source.GAQ_QA: Genre.QA_FORUM,
    Source.GAQ_REVIEWS: Genre.REVIEW,
}

_SOURCE_ALIASES: dict[str, Source] = {
    "dagstuhl": Source.DAGSTUHL,
    "dagstuhl-15512": Source.DAGSTUHL,
    "dagstuhl-15512-argquality": Source.DAGSTUHL,
    "ukpconvarg2": Source.UKPCONVARG2,
    "ukpconvarg": Source.UKPCONVARG2,
    "ukp": Source.UKPCONVARG2,
    "gaq-debates": Source.GAQ_DEBATES,
    "gaqcorpus-debates": Source.GAQ_DEBATES,
    "gaq-debate": Source.GAQ_DEBATES,
    "gaq-qa": Source.GAQ_QA,
    "gaqcorpus-qa": Source.GAQ_QA,
    "gaq-qa-forums": Source.GAQ_QA,
    "gaq-reviews": Source.GAQ_REVIEWS,
    "gaqcorpus-reviews": Source.GAQ_REVIEWS,
    "gaq-review": Source.GAQ_REVIEWS,
}

# Per-source report groups. The Dagstuhl arguments are a subset of UKPConvArg2.
SOURCE_GROUPS: dict[str, tuple[Source, ...]] = {
    "ukpconvarg2": (Source.DAGSTUHL, Source.UKPCONVARG2),
    "gaq-debates": (Source.GAQ_DEBATES,),
    "gaq-qa": (Source.GAQ_QA,),
    "gaq-reviews": (Source.GAQ_REVIEWS,),
}

THEORY_QUALITY_DIMENSIONS: tuple[str, ...] = (
    "cogency",
    "local-acceptability",
    "local-relevance",
    "local-sufficiency",
    "effectiveness",
    "credibility",
    "emotional-appeal",
    "clarity",
    "appropriateness",
    "arrangement",
    "reasonableness",
    "global-acceptability",
    "global-relevance",
    "global-sufficiency",
    "overall-quality",
)

GAQ_QUALITY_DIMENSIONS: tuple[str, ...] = ("cogency", "effectiveness", "reasonableness", "overall-quality")

RATING_SCALES: dict[str, tuple[int, int]] = {"dagstuhl": (1, 3), "gaq": (1, 5)}
DEFAULT_RATING_SCALE = (1, 3)

# Convincingness comparison reasons, in report order. (a, b): a more convincing than b.
PAIR_REASONS: dict[str, str] = {
    "attacking-abusive": "b is attacking / abusive",
    "language-issues": "b has language issues / humour / sarcasm",
    "unclear": "b is unclear / hard to follow",
    "no-credible-evidence": "b has no credible evidence / no facts",
    "insufficient-reasoning": "b has less or insufficient reasoning",
    "irrelevant-reasons": "b uses irrelevant reasons",
    "only-opinion": "b is only an opinion / a rant",
    "nonsense": "b is non-sense / confusing",
    "off-topic": "b does not address the topic",
    "weak-vague": "b is generally weak / vague",
    "more-detailed": "a is more detailed / better reasoned / deeper",
    "objective": "a is objective / discusses other views",
    "more-credible": "a is more credible / confident",
    "well-written": "a is clear / crisp / well-written",
    "on-topic": "a sticks to the topic",
    "makes-you-think": "a makes you think",
    "well-thought-through": "a is well thought through / smart",
    "overall": "a is more convincing than b",
}

ARGUMENT_COLUMNS = ("argument_id", "source", "issue", "text")
ANNOTATION_COLUMNS = (
    ("argument_id", "annotator_id", "batch_id") + tuple(d.value for d in DIMENSION_ORDER) + ("ru_text",)
)
RATING_COLUMNS = ("argument_id", "corpus", "dimension", "rater_id", "score")
PAIR_COLUMNS = ("pair_id", "more_convincing_id", "less_convincing_id", "reason")

_SENTENCE_END_RE = re.compile(r"[.!?](?=\s|$)")


def parse_source(raw: str) -> Source:
    key = re.sub(r"[\s_]+", "-", str(raw).strip().lower())
    if key in _SOURCE_ALIASES:
        return _SOURCE_ALIASES[key]
    raise IngestError(f"unknown source tag: {raw!r}")


def count_sentences(text: str) -> int:
    """Sentences end at . ! or ? followed by whitespace or end of text."""
    pieces = [p for p in _SENTENCE_END_RE.split(text) if p.strip()]
    return len(pieces)


@dataclass(frozen=True)
class Argument:
    argument_id: str
    source: Source
    issue: str
    text: str

    @property
    def genre(self) -> Genre:
        return GENRE_BY_SOURCE[self.source]


@dataclass(frozen=True)
class QualityRating:
    argument_id: str
    corpus: str
    dimension_name: str
    rater_id: str
    score: int


@dataclass(frozen=True)
class PairReason:
    pair_id: str
    more_convincing_id: str
    less_convincing_id: str
    reason_code: str


@dataclass(frozen=True)
class LineIssue:
    line: int
    argument_id: str | None
    code: str
    messages: list[str]


@dataclass
class IngestReport:
    count: int = 0
    skipped: int = 0
    rejected: list[LineIssue] = field(default_factory=list)
    repairs: list[LineIssue] = field(default_factory=list)
    warnings: list[LineIssue] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class GroupStats:
    arguments: int
    issues: int
    genres: dict[str, int]
    mean_sentences: float


@dataclass(frozen=True)
class CorpusReport:
    group_by: str
    total: GroupStats
    groups: dict[str, GroupStats]


# ---------------------------------------------------------------------------
# Row codecs (TSV and JSONL share the same keys)
# ---------------------------------------------------------------------------


def record_to_row(record: AnnotationRecord) -> dict[str, Any]:
    row: dict[str, Any] = {
        "argument_id": record.argument_id,
        "annotator_id": record.annotator_id,
        "batch_id": record.batch_id,
        "IN": int(record.in_rating),
    }
    for d in FLAG_DIMENSIONS:
        row[d.value] = int(bool(record.flags[d]))
    row["ru_text"] = record.ru_free_text or ""
    return row


def row_to_record(row: dict[str, Any]) -> tuple[AnnotationRecord | None, list[str]]:
    """Returns (record, structural_errors). A record is returned whenever the ids parse."""
    errors: list[str] = []
    argument_id = str(row.get("argument_id") or "").strip()
    annotator_id = str(row.get("annotator_id") or "").strip()
    if not argument_id:
        errors.append("missing argument_id")
    if not annotator_id:
        errors.append("missing annotator_id")

    raw_in = row.get("IN")
    try:
        in_rating = int(str(raw_in).strip())
    except (TypeError, ValueError):
        errors.append(f"IN must be 1, 2 or 3 (got {raw_in!r})")
        in_rating = 0

    flags: dict[DimensionId, bool] = {}
    for d in FLAG_DIMENSIONS:
        raw = row.get(d.value)
        if raw is None or str(raw).strip() == "":
            errors.append(f"missing flag {d.value}")
            continue
        try:
            flags[d] = parse_flag(raw)
        except TaxonomyError as e:
            errors.append(f"{d.value}: {e}")

    if not argument_id or not annotator_id:
        return None, errors

    ru_text = str(row.get("ru_text") or "").strip() or None
    record = AnnotationRecord(
        argument_id=argument_id,
        annotator_id=annotator_id,
        in_rating=in_rating,
        flags=flags,
        ru_free_text=ru_text,
        batch_id=str(row.get("batch_id") or "").strip(),
        submitted_at=(str(row["submitted_at"]) if row.get("submitted_at") else None),
    )
    errors.extend(e for e in record.structural_errors() if e not in errors and not e.startswith("missing flag"))
    return record, errors


def _read_rows(stream: IO[str], fmt: str, required: tuple[str, ...]) -> Iterator[tuple[int, dict[str, Any]]]:
    fmt = fmt.lower()
    if fmt == "tsv":
        reader = csv.DictReader(stream, delimiter="\t")
        if reader.fieldnames is None:
            return
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"missing columns: {', '.join(missing)}", line=1)
        for row in reader:
            if None in row:
                raise IngestError("too many fields", line=reader.line_num)
            yield reader.line_num, row
    elif fmt == "jsonl":
        for n, line in enumerate(stream, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestError(f"invalid JSON: {e.msg}", line=n) from e
            if not isinstance(obj, dict):
                raise IngestError("each line must be a JSON object", line=n)
            yield n, obj
    else:
        raise IngestError(f"unsupported format: {fmt!r}")


def _write_rows(stream: IO[str], fmt: str, columns: tuple[str, ...], rows: Iterable[dict[str, Any]]) -> int:
    n = 0
    if fmt == "tsv":
        writer = csv.writer(stream, delimiter="\t", lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row[c] for c in columns])
            n += 1
    elif fmt == "jsonl":
        for row in rows:
            stream.write(json.dumps({c: row[c] for c in columns}, ensure_ascii=False) + "\n")
            n += 1
    else:
        raise IngestError(f"unsupported format: {fmt!r}")
    return n


def parse_arguments(stream: IO[str], fmt: str = "tsv") -> list[tuple[int, Argument]]:
    out: list[tuple[int, Argument]] = []
    for line, row in _read_rows(stream, fmt, ARGUMENT_COLUMNS):
        argument_id = str(row.get("argument_id") or "").strip()
        if not argument_id:
            raise IngestError("missing argument_id", line=line)
        try:
            source = parse_source(str(row.get("source") or ""))
        except IngestError as e:
            raise IngestError(str(e), line=line) from e
        text = str(row.get("text") or "")
        if not text.strip():
            raise IngestError(f"argument {argument_id!r} has empty text", line=line)
        out.append((line, Argument(argument_id, source, str(row.get("issue") or "").strip(), text)))
    return out


def parse_annotations(stream: IO[str], fmt: str = "tsv") -> Iterator[tuple[int, AnnotationRecord | None, list[str]]]:
    """(line, record, structural_errors) per row; ru_text is optional."""
    for line, row in _read_rows(stream, fmt, ANNOTATION_COLUMNS[:-1]):
        record, errors = row_to_record(row)
        yield line, record, errors


def parse_ratings(stream: IO[str], fmt: str = "tsv") -> list[tuple[int, QualityRating]]:
    out: list[tuple[int, QualityRating]] = []
    for line, row in _read_rows(stream, fmt, RATING_COLUMNS):
        try:
            score = int(str(row.get("score")).strip())
        except ValueError as e:
            raise IngestError(f"score must be an integer (got {row.get('score')!r})", line=line) from e
        out.append(
            (
                line,
                QualityRating(
                    argument_id=str(row.get("argument_id") or "").strip(),
                    corpus=str(row.get("corpus") or "dagstuhl").strip().lower(),
                    dimension_name=str(row.get("dimension") or "").strip().lower(),
                    rater_id=str(row.get("rater_id") or "").strip(),
                    score=score,
                ),
            )
        )
    return out


def parse_pairs(stream: IO[str], fmt: str = "tsv") -> list[tuple[int, PairReason]]:
    out: list[tuple[int, PairReason]] = []
    for line, row in _read_rows(stream, fmt, PAIR_COLUMNS):
        out.append(
            (
                line,
                PairReason(
                    pair_id=str(row.get("pair_id") or "").strip(),
                    more_convincing_id=str(row.get("more_convincing_id") or "").strip(),
                    less_convincing_id=str(row.get("less_convincing_id") or "").strip(),
                    reason_code=str(row.get("reason") or "").strip().lower(),
                ),
            )
        )
    return out


# ---------------------------------------------------------------------------
# Released-corpus import adapter
# ---------------------------------------------------------------------------

RELEASED_COLUMNS: dict[str, str] = {
    "argument_id": "post_id",
    "source": "source_dataset",
    "issue": "issue",
    "text": "post_text",
    "annotator_id": "annotator",
}


def read_released_corpus(
    stream: IO[str],
    *,
    delimiter: str = ",",
    columns: dict[str, str] | None = None,
    in_scale: str = "binary",
    default_annotator: str = "released",
) -> tuple[list[Argument], list[AnnotationRecord]]:
    """Map a released CSV (full dimension names as headers) onto canonical objects.

    `in_scale="binary"` reads Inappropriateness as 0/1 and maps 1 to rating 2
    and 0 to rating 3; `"ordinal"` reads it as the 1..3 rating.
    """
    cmap = {**RELEASED_COLUMNS, **(columns or {})}
    reader = csv.DictReader(stream, delimiter=delimiter)
    if reader.fieldnames is None:
        return [], []
    by_name = {dimension(d).name.lower(): d for d in DIMENSION_ORDER}
    dim_columns: dict[DimensionId, str] = {}
    for col in reader.fieldnames:
        d = by_name.get(col.strip().lower())
        if d is not None:
            dim_columns[d] = col
    missing = [d.value for d in DIMENSION_ORDER if d not in dim_columns]
    if missing:
        raise IngestError(f"released file lacks dimension columns: {', '.join(missing)}", line=1)

    arguments: dict[str, Argument] = {}
    records: list[AnnotationRecord] = []
    for row in reader:
        line = reader.line_num
        argument_id = str(row.get(cmap["argument_id"]) or "").strip()
        if not argument_id:
            raise IngestError("missing argument id", line=line)
        if argument_id not in arguments:
            try:
                source = parse_source(str(row.get(cmap["source"]) or ""))
            except IngestError as e:
                raise IngestError(str(e), line=line) from e
            arguments[argument_id] = Argument(
                argument_id,
                source,
                str(row.get(cmap["issue"]) or "").strip(),
                str(row.get(cmap["text"]) or ""),
            )

        raw_in = str(row.get(dim_columns[DimensionId.IN]) or "").strip()
        try:
            if in_scale == "ordinal":
                in_rating = int(float(raw_in))
            else:
                in_rating = 2 if parse_flag(str(int(float(raw_in)))) else 3
        except (ValueError, TaxonomyError) as e:
            raise IngestError(f"invalid Inappropriateness value {raw_in!r}", line=line) from e

        flags: dict[DimensionId, bool] = {}
        for d in FLAG_DIMENSIONS:
            raw = str(row.get(dim_columns[d]) or "").strip()
            try:
                flags[d] = parse_flag(str(int(float(raw))))
            except (ValueError, TaxonomyError) as e:
                raise IngestError(f"invalid {d.value} value {raw!r}", line=line) from e

        annotator_id = str(row.get(cmap["annotator_id"]) or "").strip() or default_annotator
        records.append(
            AnnotationRecord(
                argument_id=argument_id,
                annotator_id=annotator_id,
                in_rating=in_rating,
                flags=flags,
            )
        )
    return list(arguments.values()), records


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


class CorpusStore:
    """Arguments, annotations, quality ratings and pair reasons.

    With a directory, every accepted object is appended to a line-delimited file
    (fsync'd) and the in-memory index is rebuilt from those files on open. One
    writer per directory, enforced with an advisory lock.
    """

    FILES = {
        "arguments": "arguments.jsonl",
        "annotations": "annotations.jsonl",
        "ratings": "ratings.jsonl",
        "pairs": "pairs.jsonl",
    }

    def __init__(self, directory: str | Path | None = None, *, writable: bool = True, on_duplicate: str = "error") -> None:
        if on_duplicate not in ("error", "skip"):
            raise ValueError("on_duplicate must be 'error' or 'skip'")
        self.directory = Path(directory) if directory is not None else None
        self.writable = writable
        self.on_duplicate = on_duplicate
        self._lock_fh: IO[str] | None = None

        self._arguments: dict[str, Argument] = {}
        self._records: dict[tuple[str, str], AnnotationRecord] = {}
        self._ratings: dict[tuple[str, str, str, str], QualityRating] = {}
        self._pairs: dict[tuple[str, str], PairReason] = {}

        if self.directory is not None:
            if writable:
                self.directory.mkdir(parents=True, exist_ok=True)
                self._acquire_lock()
            self._load()

    # -- lifecycle ---------------------------------------------------------

    def _acquire_lock(self) -> None:
        assert self.directory is not None
        fh = open(self.directory / ".lock", "a+", encoding="utf-8")
        try:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as e:
            fh.close()
            raise IngestError(f"corpus store {self.directory} is locked by another writer") from e
        self._lock_fh = fh

    def close(self) -> None:
        if self._lock_fh is not None:
            fcntl.flock(self._lock_fh.fileno(), fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def __enter__(self) -> "CorpusStore":
        return self

    def __exit__(self, *_exc: object) -> None:
        self.close()

    def _load(self) -> None:
        assert self.directory is not None
        for kind, name in self.FILES.items():
            path = self.directory / name
            if not path.exists():
                continue
            with open(path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        data = json.loads(line)["data"]
                    except (json.JSONDecodeError, KeyError) as e:
                        raise IngestError(f"corrupt store file {name}", line=n) from e
                    self._index(kind, data)

    def _index(self, kind: str, data: dict[str, Any]) -> None:
        if kind == "arguments":
            a = Argument(data["argument_id"], Source(data["source"]), data["issue"], data["text"])
            self._arguments[a.argument_id] = a
        elif kind == "annotations":
            record, _ = row_to_record(data)
            assert record is not None
            self._records[(record.argument_id, record.annotator_id)] = record
        elif kind == "ratings":
            r = QualityRating(**data)
            self._ratings[(r.argument_id, r.corpus, r.dimension_name, r.rater_id)] = r
        elif kind == "pairs":
            p = PairReason(**data)
            self._pairs[(p.pair_id, p.reason_code)] = p

    def _persist(self, kind: str, rows: list[dict[str, Any]], origin: str) -> None:
        if self.directory is None or not rows:
            return
        if not self.writable:
            raise IngestError("corpus store opened read-only")
        audit = {"ingested_at": _utc_now_iso(), "origin": origin}
        with open(self.directory / self.FILES[kind], "a", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps({"data": row, "audit": audit}, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def snapshot(self) -> "CorpusStore":
        """Detached in-memory copy for readers."""
        copy = CorpusStore(None)
        copy._arguments = dict(self._arguments)
        copy._records = dict(self._records)
        copy._ratings = dict(self._ratings)
        copy._pairs = dict(self._pairs)
        return copy

    # -- accessors ---------------------------------------------------------

    def arguments(self) -> list[Argument]:
        return list(self._arguments.values())

    def argument(self, argument_id: str) -> Argument | None:
        return self._arguments.get(argument_id)

    def records(self) -> list[AnnotationRecord]:
        return list(self._records.values())

    def ratings(self) -> list[QualityRating]:
        return list(self._ratings.values())

    def pairs(self) -> list[PairReason]:
        return list(self._pairs.values())

    def annotators(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self._records.values():
            seen.setdefault(r.annotator_id, None)
        return list(seen)

    # -- ingestion ---------------------------------------------------------

    def add_arguments(self, arguments: Iterable[Argument | tuple[int, Argument]], *, origin: str = "api") -> int:
        staged: list[Argument] = []
        seen: set[str] = set()
        skipped = 0
        for item in arguments:
            line, arg = item if isinstance(item, tuple) else (None, item)
            if not arg.text.strip():
                raise IngestError(f"argument {arg.argument_id!r} has empty text", line=line)
            if arg.argument_id in self._arguments or arg.argument_id in seen:
                if self.on_duplicate == "skip":
                    logger.warning("Skipping duplicate argument_id %s", arg.argument_id)
                    skipped += 1
                    continue
                raise IngestError(f"duplicate argument_id {arg.argument_id!r}", line=line)
            seen.add(arg.argument_id)
            staged.append(arg)

        rows = [
            {"argument_id": a.argument_id, "source": a.source.value, "issue": a.issue, "text": a.text} for a in staged
        ]
        self._persist("arguments", rows, origin)
        for a in staged:
            self._arguments[a.argument_id] = a
        logger.info("Ingested %d arguments (%d duplicates skipped)", len(staged), skipped)
        return len(staged)

    def ingest_arguments(self, stream: IO[str], fmt: str = "tsv") -> int:
        return self.add_arguments(parse_arguments(stream, fmt), origin=getattr(stream, "name", "stream"))

    def add_records(
        self,
        records: Iterable[AnnotationRecord | tuple[int, AnnotationRecord | None, list[str]]],
        *,
        validation: ValidationMode | str = ValidationMode.LENIENT,
        origin: str = "api",
    ) -> IngestReport:
        mode = ValidationMode(validation)
        report = IngestReport()
        staged: dict[tuple[str, str], AnnotationRecord] = {}

        for n, item in enumerate(records, start=1):
            if isinstance(item, tuple):
                line, record, parse_errors = item
            else:
                line, record, parse_errors = n, item, []

            if record is None or parse_errors:
                report.rejected.append(
                    LineIssue(line, record.argument_id if record else None, "structural", list(parse_errors))
                )
                continue
            if record.argument_id not in self._arguments:
                report.rejected.append(
                    LineIssue(line, record.argument_id, "unknown_argument", [f"unknown argument_id {record.argument_id!r}"])
                )
                continue

            result = validate(record, mode)
            if result.structural:
                report.rejected.append(LineIssue(line, record.argument_id, "structural", result.structural_errors))
                continue
            if mode is ValidationMode.STRICT:
                if not result.ok:
                    report.rejected.append(
                        LineIssue(line, record.argument_id, "violation", [v.message for v in result.violations])
                    )
                    continue
            else:
                repaired = close(record)
                if repaired != record:
                    changed = [
                        d.value for d in FLAG_DIMENSIONS if repaired.flags[d] != record.flags[d]
                    ] + (["IN"] if repaired.in_rating != record.in_rating else [])
                    report.repairs.append(
                        LineIssue(line, record.argument_id, "closure", [f"set {', '.join(changed)} by closure"])
                    )
                    logger.warning(
                        "Repaired record %s/%s by closure: %s", record.argument_id, record.annotator_id, ", ".join(changed)
                    )
                    record = repaired
                leftover = validate(record, ValidationMode.STRICT)
                if not leftover.ok:
                    report.warnings.append(
                        LineIssue(line, record.argument_id, "violation", [v.message for v in leftover.violations])
                    )

            key = (record.argument_id, record.annotator_id)
            if key in self._records or key in staged:
                if self.on_duplicate == "skip":
                    logger.warning("Skipping duplicate annotation %s/%s", *key)
                    report.skipped += 1
                    continue
                report.rejected.append(
                    LineIssue(line, record.argument_id, "duplicate", [f"duplicate annotation {key[0]}/{key[1]}"])
                )
                continue
            staged[key] = record

        self._persist("annotations", [record_to_row(r) | _submitted(r) for r in staged.values()], origin)
        self._records.update(staged)
        report.count = len(staged)
        logger.info(
            "Ingested %d annotations (%d rejected, %d repaired)", report.count, len(report.rejected), len(report.repairs)
        )
        return report

    def ingest_annotations(
        self, stream: IO[str], fmt: str = "tsv", validation: ValidationMode | str = ValidationMode.LENIENT
    ) -> IngestReport:
        return self.add_records(parse_annotations(stream, fmt), validation=validation, origin=getattr(stream, "name", "stream"))

    def add_ratings(
        self,
        ratings: Iterable[QualityRating | tuple[int, QualityRating]],
        *,
        scale: tuple[int, int] | None = None,
        origin: str = "api",
    ) -> int:
        staged: dict[tuple[str, str, str, str], QualityRating] = {}
        for item in ratings:
            line, r = item if isinstance(item, tuple) else (None, item)
            if r.argument_id not in self._arguments:
                raise IngestError(f"unknown argument_id {r.argument_id!r}", line=line)
            if not r.dimension_name or not r.rater_id:
                raise IngestError("rating needs dimension and rater_id", line=line)
            lo, hi = scale or RATING_SCALES.get(r.corpus, DEFAULT_RATING_SCALE)
            if not lo <= r.score <= hi:
                raise IngestError(f"score {r.score} outside {lo}..{hi}", line=line)
            key = (r.argument_id, r.corpus, r.dimension_name, r.rater_id)
            if key in self._ratings or key in staged:
                if self.on_duplicate == "skip":
                    logger.warning("Skipping duplicate rating %s", "/".join(key))
                    continue
                raise IngestError(f"duplicate rating {'/'.join(key)}", line=line)
            staged[key] = r
        self._persist("ratings", [asdict(r) for r in staged.values()], origin)
        self._ratings.update(staged)
        return len(staged)

    def ingest_ratings(self, stream: IO[str], fmt: str = "tsv", scale: tuple[int, int] | None = None) -> int:
        return self.add_ratings(parse_ratings(stream, fmt), scale=scale, origin=getattr(stream, "name", "stream"))

    def add_pairs(self, pairs: Iterable[PairReason | tuple[int, PairReason]], *, origin: str = "api") -> int:
        staged: dict[tuple[str, str], PairReason] = {}
        for item in pairs:
            line, p = item if isinstance(item, tuple) else (None, item)
            if p.reason_code not in PAIR_REASONS:
                raise IngestError(f"unknown reason code {p.reason_code!r}", line=line)
            if p.more_convincing_id == p.less_convincing_id:
                raise IngestError(f"pair {p.pair_id!r} compares an argument with itself", line=line)
            for a in (p.more_convincing_id, p.less_convincing_id):
                if a not in self._arguments:
                    raise IngestError(f"unknown argument_id {a!r}", line=line)
            key = (p.pair_id, p.reason_code)
            if key in self._pairs or key in staged:
                if self.on_duplicate == "skip":
                    logger.warning("Skipping duplicate pair reason %s/%s", *key)
                    continue
                raise IngestError(f"duplicate pair reason {key[0]}/{key[1]}", line=line)
            staged[key] = p
        self._persist("pairs", [asdict(p) for p in staged.values()], origin)
        self._pairs.update(staged)
        return len(staged)

    def ingest_pairs(self, stream: IO[str], fmt: str = "tsv") -> int:
        return self.add_pairs(parse_pairs(stream, fmt), origin=getattr(stream, "name", "stream"))

    # -- export ------------------------------------------------------------

    def export_arguments(self, stream: IO[str], fmt: str = "tsv") -> int:
        rows = (
            {"argument_id": a.argument_id, "source": a.source.value, "issue": a.issue, "text": a.text}
            for a in self._arguments.values()
        )
        return _write_rows(stream, fmt, ARGUMENT_COLUMNS, rows)

    def export_annotations(self, stream: IO[str], fmt: str = "tsv") -> int:
        return write_annotations(stream, self._records.values(), fmt)

    # -- checks and statistics --------------------------------------------

    def check_integrity(self, expected_annotators: int | None = None) -> list[str]:
        problems: list[str] = []
        for r in self._records.values():
            if r.argument_id not in self._arguments:
                problems.append(f"annotation references unknown argument {r.argument_id}")
        for q in self._ratings.values():
            if q.argument_id not in self._arguments:
                problems.append(f"rating references unknown argument {q.argument_id}")
        for p in self._pairs.values():
            for a in (p.more_convincing_id, p.less_convincing_id):
                if a not in self._arguments:
                    problems.append(f"pair {p.pair_id} references unknown argument {a}")
        if expected_annotators is not None:
            found = len(self.annotators())
            if found != expected_annotators:
                problems.append(f"expected {expected_annotators} annotators, found {found}")
        return problems

    def corpus_stats(self, group_by: str = "none") -> CorpusReport:
        if group_by not in ("none", "source", "genre"):
            raise ValueError("group_by must be one of: none, source, genre")
        args = list(self._arguments.values())
        groups: dict[str, GroupStats] = {}
        if group_by == "source":
            for s in Source:
                groups[s.value] = _group_stats([a for a in args if a.source is s])
        elif group_by == "genre":
            for g in Genre:
                groups[g.value] = _group_stats([a for a in args if a.genre is g])
        return CorpusReport(group_by=group_by, total=_group_stats(args), groups=groups)


def _submitted(record: AnnotationRecord) -> dict[str, Any]:
    return {"submitted_at": record.submitted_at} if record.submitted_at else {}


def write_annotations(stream: IO[str], records: Iterable[AnnotationRecord], fmt: str = "tsv") -> int:
    return _write_rows(stream, fmt, ANNOTATION_COLUMNS, (record_to_row(r) for r in records))


def _group_stats(args: list[Argument]) -> GroupStats:
    genres = {g.value: 0 for g in Genre}
    for a in args:
        genres[a.genre.value] += 1
    sentences = [count_sentences(a.text) for a in args]
    return GroupStats(
        arguments=len(args),
        issues=len({a.issue for a in args}),
        genres=genres,
        mean_sentences=(sum(sentences) / len(sentences)) if sentences else 0.0,
    )
