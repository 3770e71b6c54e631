"""Annotation campaign protocol: batch planning, item issuance, pacing, submission, export.

Functions take an open sqlite connection (see app.db) and an explicit `now`
so the HTTP layer and tests control time.
"""

from __future__ import annotations

import io
import logging
import math
import sqlite3
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Iterable, Sequence

import numpy as np

from app.core.aggregate import Strategy, aggregate_strategy
from app.core.corpus import Argument, IngestError, parse_source, record_to_row, row_to_record, write_annotations
from app.core.reports import render, table1b, table1c
from app.core.taxonomy import FLAG_DIMENSIONS, AnnotationRecord, DimensionId, ValidationMode, validate
from app.db import (
    ArgumentItem,
    CampaignItem,
    IssueItem,
    answered_in_batch,
    current_submission,
    get_argument,
    get_campaign,
    get_issue,
    insert_campaign,
    insert_issue,
    latest_issue,
    list_batches,
    list_campaign_annotators,
    list_completions,
    list_current_submissions,
    list_submission_history,
    record_submission,
    submission_by_issue_key,
)

logger = logging.getLogger(__name__)

EXPORT_KINDS = ("annotations", "conservative-gold", "agreement", "correlations")


class CampaignError(RuntimeError):
    def __init__(self, message: str, *, code: str, status: int = 400, details: Any = None) -> None:
        super().__init__(message)
        self.code = code
        self.status = status
        self.details = details


@dataclass(frozen=True)
class CampaignSettings:
    batch_size: int = 150
    pacing_window_hours: float = 24.0
    allow_revision: bool = True


@dataclass(frozen=True)
class NextItem:
    status: str  # "item" | "pacing-block" | "done"
    batches_total: int
    batches_done: int
    batch_index: int | None = None
    batch_total: int = 0
    batch_done: int = 0
    argument: ArgumentItem | None = None
    issue_key: str | None = None
    unblock_at: str | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "status": self.status,
            "progress": {
                "batch_index": self.batch_index,
                "batch_done": self.batch_done,
                "batch_total": self.batch_total,
                "batches_done": self.batches_done,
                "batches_total": self.batches_total,
            },
        }
        if self.argument is not None:
            out["item"] = {
                "argument_id": self.argument.argument_id,
                "issue": self.argument.issue,
                "text": self.argument.text,
                "source": self.argument.source,
                "issue_key": self.issue_key,
            }
        if self.unblock_at is not None:
            out["unblock_at"] = self.unblock_at
        return out


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    violations: list[dict[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    submission_id: int | None = None
    duplicate: bool = False
    revision: bool = False
    batch_completed: bool = False


_locks_guard = threading.Lock()
_locks: dict[str, threading.Lock] = {}


def campaign_lock(campaign_id: str) -> threading.Lock:
    """Writes to one campaign are serialized through this lock."""
    with _locks_guard:
        lock = _locks.get(campaign_id)
        if lock is None:
            lock = _locks[campaign_id] = threading.Lock()
        return lock


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def _parse_iso(raw: str) -> datetime:
    dt = datetime.fromisoformat(raw)
    return dt if dt.tzinfo else dt.replace(tzinfo=timezone.utc)


def plan_batches(argument_ids: Sequence[str], batch_size: int = 150, seed: int = 0) -> list[list[str]]:
    """Seeded shuffle, then ceil(n / batch_size) contiguous slices whose sizes differ by at most one."""
    if batch_size < 1:
        raise CampaignError("batch_size must be >= 1", code="invalid_batch_size")
    ids = list(argument_ids)
    if not ids:
        raise CampaignError("cannot plan batches for an empty corpus", code="empty_corpus")
    order = np.random.default_rng(seed).permutation(len(ids))
    parts = math.ceil(len(ids) / batch_size)
    return [[ids[int(i)] for i in chunk] for chunk in np.array_split(order, parts)]


def create_campaign(
    conn: sqlite3.Connection,
    *,
    arguments: Sequence[Argument],
    annotators: Sequence[str],
    seed: int,
    settings: CampaignSettings,
    now: datetime,
    campaign_id: str | None = None,
    corpus_ref: str = "inline",
) -> CampaignItem:
    campaign_id = campaign_id or uuid.uuid4().hex[:12]
    if get_campaign(conn, campaign_id) is not None:
        raise CampaignError(f"campaign {campaign_id} already exists", code="campaign_exists", status=409)
    roster = sorted({str(a).strip() for a in annotators if str(a).strip()})
    if not roster:
        raise CampaignError("a campaign needs at least one annotator", code="empty_roster")
    ids = [a.argument_id for a in arguments]
    if len(set(ids)) != len(ids):
        raise CampaignError("duplicate argument ids in campaign corpus", code="duplicate_argument")
    batches = plan_batches(ids, settings.batch_size, seed)
    insert_campaign(
        conn,
        campaign_id=campaign_id,
        seed=seed,
        batch_size=settings.batch_size,
        pacing_window_hours=settings.pacing_window_hours,
        allow_revision=settings.allow_revision,
        corpus_ref=corpus_ref,
        arguments=[ArgumentItem(a.argument_id, a.source.value, a.issue, a.text) for a in arguments],
        annotators=roster,
        batches=batches,
        created_at=_iso(now),
    )
    logger.info("Created campaign %s: %d arguments in %d batches, %d annotators", campaign_id, len(ids), len(batches), len(roster))
    campaign = get_campaign(conn, campaign_id)
    assert campaign is not None
    return campaign


def _require(conn: sqlite3.Connection, campaign_id: str, annotator_id: str | None = None) -> CampaignItem:
    campaign = get_campaign(conn, campaign_id)
    if campaign is None:
        raise CampaignError(f"unknown campaign {campaign_id}", code="unknown_campaign", status=404)
    if annotator_id is not None and annotator_id not in list_campaign_annotators(conn, campaign_id):
        raise CampaignError(f"{annotator_id} is not on this campaign's roster", code="unknown_annotator", status=404)
    return campaign


def _current_batch(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, n_batches: int) -> int | None:
    done = list_completions(conn, campaign_id, annotator_id)
    for b in range(n_batches):
        if b not in done:
            return b
    return None


def _unblock_at(campaign: CampaignItem, completions: dict[int, str]) -> datetime | None:
    if not completions:
        return None
    last = max(_parse_iso(t) for t in completions.values())
    return last + timedelta(hours=campaign.pacing_window_hours)


def next_item(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, now: datetime) -> NextItem:
    campaign = _require(conn, campaign_id, annotator_id)
    batches = list_batches(conn, campaign_id)
    completions = list_completions(conn, campaign_id, annotator_id)
    current = _current_batch(conn, campaign_id, annotator_id, len(batches))
    if current is None:
        return NextItem("done", batches_total=len(batches), batches_done=len(completions))

    answered = answered_in_batch(conn, campaign_id, annotator_id, current)
    base = dict(
        batches_total=len(batches),
        batches_done=len(completions),
        batch_index=current,
        batch_total=len(batches[current]),
        batch_done=len(answered & set(batches[current])),
    )
    if not answered:
        unblock = _unblock_at(campaign, completions)
        if unblock is not None and now < unblock:
            return NextItem("pacing-block", unblock_at=_iso(unblock), **base)

    argument_id = next(a for a in batches[current] if a not in answered)
    with campaign_lock(campaign_id):
        issued = latest_issue(conn, campaign_id, annotator_id, argument_id)
        if issued is None or submission_by_issue_key(conn, issued.issue_key) is not None:
            issued = IssueItem(uuid.uuid4().hex, campaign_id, annotator_id, argument_id, current, _iso(now))
            insert_issue(conn, issued)
    argument = get_argument(conn, campaign_id, argument_id)
    return NextItem("item", argument=argument, issue_key=issued.issue_key, **base)


def record_from_payload(payload: dict[str, Any], annotator_id: str, batch_id: str) -> tuple[AnnotationRecord | None, list[str]]:
    """Submitted JSON to a record. Flags left out count as no."""
    flags = payload.get("flags") if isinstance(payload.get("flags"), dict) else {}
    row: dict[str, Any] = {
        "argument_id": payload.get("argument_id"),
        "annotator_id": annotator_id,
        "batch_id": batch_id,
        "IN": payload.get("in_rating", payload.get("IN")),
        "ru_text": payload.get("ru_text") or "",
    }
    for d in FLAG_DIMENSIONS:
        raw = flags.get(d.value, payload.get(d.value, False))
        row[d.value] = "1" if raw is True else "0" if raw is False else raw
    return row_to_record(row)


def protocol_violations(record: AnnotationRecord) -> tuple[list[dict[str, str]], list[str]]:
    """Strict taxonomy validation plus the interface rule that RU needs its free text."""
    result = validate(record, ValidationMode.STRICT)
    if result.structural:
        return [{"rule": "structural", "dimension": "", "message": m} for m in result.structural_errors], []
    violations = [{"rule": v.rule, "dimension": v.dimension.value, "message": v.message} for v in result.violations]
    if record.flags.get(DimensionId.RU) and not (record.ru_free_text or "").strip():
        violations.append(
            {"rule": "ru_without_text", "dimension": "RU", "message": "describe the unclassified reason in the text field"}
        )
    return violations, result.warnings


def submit(
    conn: sqlite3.Connection, campaign_id: str, annotator_id: str, payload: dict[str, Any], now: datetime
) -> SubmitResult:
    campaign = _require(conn, campaign_id, annotator_id)
    issue_key = str(payload.get("issue_key") or "").strip() or None
    argument_id = str(payload.get("argument_id") or "").strip()
    if not argument_id:
        raise CampaignError("argument_id is required", code="missing_argument_id")
    if get_argument(conn, campaign_id, argument_id) is None:
        raise CampaignError(f"unknown argument {argument_id}", code="unknown_argument", status=404)

    with campaign_lock(campaign_id):
        if issue_key is not None:
            prior = submission_by_issue_key(conn, issue_key)
            if prior is not None:
                if prior.annotator_id != annotator_id or prior.argument_id != argument_id:
                    raise CampaignError("issue key belongs to another item", code="stale_item", status=409)
                return SubmitResult(accepted=True, submission_id=prior.id, duplicate=True)
            issued = get_issue(conn, issue_key)
            if issued is None or issued.annotator_id != annotator_id or issued.argument_id != argument_id or issued.campaign_id != campaign_id:
                raise CampaignError("this item was not issued to you", code="stale_item", status=409)
        else:
            issued = latest_issue(conn, campaign_id, annotator_id, argument_id)
            if issued is None:
                raise CampaignError("this item was not issued to you", code="stale_item", status=409)

        existing = current_submission(conn, campaign_id, annotator_id, argument_id)
        if existing is not None and not campaign.allow_revision:
            raise CampaignError("item already submitted and revision is disabled", code="already_submitted", status=409)

        record, parse_errors = record_from_payload(payload, annotator_id, f"{campaign_id}:{issued.batch_index}")
        if record is None or parse_errors:
            return SubmitResult(
                accepted=False,
                violations=[{"rule": "structural", "dimension": "", "message": m} for m in parse_errors],
            )
        violations, warnings = protocol_violations(record)
        if violations:
            return SubmitResult(accepted=False, violations=violations, warnings=warnings)

        batch = list_batches(conn, campaign_id)[issued.batch_index]
        answered = answered_in_batch(conn, campaign_id, annotator_id, issued.batch_index) | {argument_id}
        completes = set(batch) <= answered and issued.batch_index not in list_completions(conn, campaign_id, annotator_id)
        row = record_to_row(record)
        row["submitted_at"] = _iso(now)
        submission_id = record_submission(
            conn,
            campaign_id=campaign_id,
            annotator_id=annotator_id,
            argument_id=argument_id,
            batch_index=issued.batch_index,
            issue_key=issue_key or (None if existing is not None else issued.issue_key),
            record=row,
            submitted_at=_iso(now),
            completes_batch=completes,
        )
    if existing is not None:
        logger.info("Submission %d supersedes %d (%s/%s)", submission_id, existing.id, annotator_id, argument_id)
    if completes:
        logger.info("%s completed batch %d of campaign %s", annotator_id, issued.batch_index, campaign_id)
    return SubmitResult(
        accepted=True,
        warnings=warnings,
        submission_id=submission_id,
        revision=existing is not None,
        batch_completed=completes,
    )


def campaign_records(conn: sqlite3.Connection, campaign_id: str) -> list[AnnotationRecord]:
    _require(conn, campaign_id)
    out: list[AnnotationRecord] = []
    for s in list_current_submissions(conn, campaign_id):
        record, _ = row_to_record(s.record)
        if record is not None:
            out.append(record)
    return out


def submission_history(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, argument_id: str) -> list[dict[str, Any]]:
    """Every stored answer for one annotator and argument, oldest first; revised rows keep their successor id."""
    _require(conn, campaign_id)
    return [
        {
            "submission_id": s.id,
            "submitted_at": s.submitted_at,
            "issue_key": s.issue_key,
            "superseded_by": s.superseded_by,
            "record": s.record,
        }
        for s in list_submission_history(conn, campaign_id, annotator_id, argument_id)
    ]


def progress(conn: sqlite3.Connection, campaign_id: str, now: datetime) -> dict[str, Any]:
    campaign = _require(conn, campaign_id)
    batches = list_batches(conn, campaign_id)
    annotators: dict[str, Any] = {}
    for a in list_campaign_annotators(conn, campaign_id):
        completions = list_completions(conn, campaign_id, a)
        current = _current_batch(conn, campaign_id, a, len(batches))
        unblock = _unblock_at(campaign, completions)
        annotators[a] = {
            "batches_done": len(completions),
            "current_batch": current,
            "current_batch_done": len(answered_in_batch(conn, campaign_id, a, current)) if current is not None else 0,
            "completed_at": {str(k): v for k, v in completions.items()},
            "blocked_until": _iso(unblock) if unblock is not None and now < unblock else None,
        }
    return {
        "campaign_id": campaign_id,
        "batches_total": len(batches),
        "batch_sizes": [len(b) for b in batches],
        "annotators": annotators,
    }


def export(conn: sqlite3.Connection, campaign_id: str, kind: str, fmt: str = "csv") -> tuple[str, str]:
    """Returns (body, mimetype)."""
    if kind not in EXPORT_KINDS:
        raise CampaignError(f"unknown export kind {kind!r}", code="unknown_export", status=404)
    records = campaign_records(conn, campaign_id)
    if kind == "annotations":
        buf = io.StringIO()
        write_annotations(buf, records)
        return buf.getvalue(), "text/tab-separated-values"
    if not records:
        raise CampaignError("campaign has no submissions yet", code="no_submissions", status=409)
    if kind == "conservative-gold":
        buf = io.StringIO()
        aggregate_strategy(records, Strategy.CONSERVATIVE, unequal="per-argument").to_tsv(buf)
        return buf.getvalue(), "text/tab-separated-values"
    mimetype = {"csv": "text/csv", "md": "text/markdown", "json": "application/json"}.get(fmt, "text/plain")
    try:
        table = table1b(records) if kind == "agreement" else table1c(records)
    except ValueError as e:
        raise CampaignError(str(e), code="insufficient_data", status=409) from e
    return render(table, fmt), mimetype


def arguments_from_rows(rows: Iterable[dict[str, Any]]) -> list[Argument]:
    out: list[Argument] = []
    for n, row in enumerate(rows, start=1):
        try:
            argument_id = str(row["argument_id"]).strip()
            text = str(row["text"])
            source = parse_source(str(row.get("source") or ""))
        except (KeyError, IngestError) as e:
            raise CampaignError(f"argument {n}: {e}", code="invalid_argument") from e
        if not argument_id or not text.strip():
            raise CampaignError(f"argument {n}: argument_id and text are required", code="invalid_argument")
        out.append(Argument(argument_id, source, str(row.get("issue") or "").strip(), text))
    return out
