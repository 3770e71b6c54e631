from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any

from flask import Flask, g


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def _connect(database_path: str) -> sqlite3.Connection:
    conn = sqlite3.connect(database_path, timeout=30)
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA foreign_keys = ON")
    # An acknowledged submission must survive a crash.
    conn.execute("PRAGMA synchronous = FULL")
    return conn


def connect(database_path: str) -> sqlite3.Connection:
    return _connect(database_path)


def table_exists(conn: sqlite3.Connection, table_name: str) -> bool:
    row = conn.execute(
        "SELECT 1 FROM sqlite_master WHERE type='table' AND name=?",
        (table_name,),
    ).fetchone()
    return row is not None


def column_exists(conn: sqlite3.Connection, table_name: str, column_name: str) -> bool:
    rows = conn.execute(f"PRAGMA table_info({table_name})").fetchall()
    return any(r["name"] == column_name for r in rows)


def migrate(conn: sqlite3.Connection) -> None:
    """Pragmatic, idempotent migrations.

    Rules:
    - Create any missing table.
    - `submissions.superseded_by` was added after the first schema; add it when absent.
    """
    conn.execute("PRAGMA journal_mode = WAL")

    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS campaigns (
            id TEXT PRIMARY KEY,
            created_at TEXT NOT NULL,
            seed INTEGER NOT NULL,
            batch_size INTEGER NOT NULL,
            pacing_window_hours REAL NOT NULL,
            allow_revision INTEGER NOT NULL,
            corpus_ref TEXT NOT NULL
        )
        """
    )
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS campaign_arguments (
            campaign_id TEXT NOT NULL,
            argument_id TEXT NOT NULL,
            source TEXT NOT NULL,
            issue TEXT NOT NULL,
            text TEXT NOT NULL,
            PRIMARY KEY (campaign_id, argument_id),
            FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
        )
        """
    )
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS campaign_annotators (
            campaign_id TEXT NOT NULL,
            annotator_id TEXT NOT NULL,
            PRIMARY KEY (campaign_id, annotator_id),
            FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
        )
        """
    )
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS batches (
            campaign_id TEXT NOT NULL,
            batch_index INTEGER NOT NULL,
            position INTEGER NOT NULL,
            argument_id TEXT NOT NULL,
            PRIMARY KEY (campaign_id, batch_index, position),
            FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
        )
        """
    )
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS issues (
            issue_key TEXT PRIMARY KEY,
            campaign_id TEXT NOT NULL,
            annotator_id TEXT NOT NULL,
            argument_id TEXT NOT NULL,
            batch_index INTEGER NOT NULL,
            issued_at TEXT NOT NULL,
            FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
        )
        """
    )
    if not table_exists(conn, "submissions"):
        conn.execute(
            """
            CREATE TABLE submissions (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                campaign_id TEXT NOT NULL,
                annotator_id TEXT NOT NULL,
                argument_id TEXT NOT NULL,
                batch_index INTEGER NOT NULL,
                issue_key TEXT,
                record_json TEXT NOT NULL,
                submitted_at TEXT NOT NULL,
                FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
            )
            """
        )
    if not column_exists(conn, "submissions", "superseded_by"):
        conn.execute("ALTER TABLE submissions ADD COLUMN superseded_by INTEGER NULL")
    conn.execute(
        """
        CREATE TABLE IF NOT EXISTS batch_completions (
            campaign_id TEXT NOT NULL,
            annotator_id TEXT NOT NULL,
            batch_index INTEGER NOT NULL,
            completed_at TEXT NOT NULL,
            PRIMARY KEY (campaign_id, annotator_id, batch_index),
            FOREIGN KEY(campaign_id) REFERENCES campaigns(id)
        )
        """
    )
    conn.execute(
        "CREATE INDEX IF NOT EXISTS idx_submissions_current "
        "ON submissions (campaign_id, annotator_id, argument_id, superseded_by)"
    )
    conn.commit()


def init_db(app: Flask) -> None:
    # Run migrations once on startup.
    conn = _connect(app.config["DATABASE_PATH"])
    try:
        migrate(conn)
    finally:
        conn.close()

    @app.before_request
    def _open_db() -> None:
        g._db = _connect(app.config["DATABASE_PATH"])

    @app.teardown_request
    def _close_db(_: Exception | None = None) -> None:
        conn2 = getattr(g, "_db", None)
        if conn2 is not None:
            conn2.close()
            g._db = None


@dataclass(frozen=True)
class CampaignItem:
    id: str
    created_at: str
    seed: int
    batch_size: int
    pacing_window_hours: float
    allow_revision: bool
    corpus_ref: str


@dataclass(frozen=True)
class ArgumentItem:
    argument_id: str
    source: str
    issue: str
    text: str


@dataclass(frozen=True)
class IssueItem:
    issue_key: str
    campaign_id: str
    annotator_id: str
    argument_id: str
    batch_index: int
    issued_at: str


@dataclass(frozen=True)
class SubmissionItem:
    id: int
    campaign_id: str
    annotator_id: str
    argument_id: str
    batch_index: int
    issue_key: str | None
    record: dict[str, Any]
    submitted_at: str
    superseded_by: int | None


def _campaign(r: sqlite3.Row) -> CampaignItem:
    return CampaignItem(
        id=str(r["id"]),
        created_at=str(r["created_at"]),
        seed=int(r["seed"]),
        batch_size=int(r["batch_size"]),
        pacing_window_hours=float(r["pacing_window_hours"]),
        allow_revision=bool(r["allow_revision"]),
        corpus_ref=str(r["corpus_ref"]),
    )


def _submission(r: sqlite3.Row) -> SubmissionItem:
    return SubmissionItem(
        id=int(r["id"]),
        campaign_id=str(r["campaign_id"]),
        annotator_id=str(r["annotator_id"]),
        argument_id=str(r["argument_id"]),
        batch_index=int(r["batch_index"]),
        issue_key=r["issue_key"],
        record=json.loads(r["record_json"]),
        submitted_at=str(r["submitted_at"]),
        superseded_by=(int(r["superseded_by"]) if r["superseded_by"] is not None else None),
    )


def insert_campaign(
    conn: sqlite3.Connection,
    *,
    campaign_id: str,
    seed: int,
    batch_size: int,
    pacing_window_hours: float,
    allow_revision: bool,
    corpus_ref: str,
    arguments: list[ArgumentItem],
    annotators: list[str],
    batches: list[list[str]],
    created_at: str | None = None,
) -> None:
    """Campaign, its arguments, roster and batch plan in one transaction."""
    with conn:
        conn.execute(
            """
            INSERT INTO campaigns (id, created_at, seed, batch_size, pacing_window_hours, allow_revision, corpus_ref)
            VALUES (?, ?, ?, ?, ?, ?, ?)
            """,
            (
                campaign_id,
                created_at or _utc_now_iso(),
                seed,
                batch_size,
                pacing_window_hours,
                int(allow_revision),
                corpus_ref,
            ),
        )
        conn.executemany(
            "INSERT INTO campaign_arguments (campaign_id, argument_id, source, issue, text) VALUES (?, ?, ?, ?, ?)",
            [(campaign_id, a.argument_id, a.source, a.issue, a.text) for a in arguments],
        )
        conn.executemany(
            "INSERT INTO campaign_annotators (campaign_id, annotator_id) VALUES (?, ?)",
            [(campaign_id, a) for a in annotators],
        )
        conn.executemany(
            "INSERT INTO batches (campaign_id, batch_index, position, argument_id) VALUES (?, ?, ?, ?)",
            [(campaign_id, b, p, a) for b, batch in enumerate(batches) for p, a in enumerate(batch)],
        )


def get_campaign(conn: sqlite3.Connection, campaign_id: str) -> CampaignItem | None:
    r = conn.execute("SELECT * FROM campaigns WHERE id = ?", (campaign_id,)).fetchone()
    if r is None:
        return None
    return _campaign(r)


def list_campaign_annotators(conn: sqlite3.Connection, campaign_id: str) -> list[str]:
    rows = conn.execute(
        "SELECT annotator_id FROM campaign_annotators WHERE campaign_id = ? ORDER BY annotator_id",
        (campaign_id,),
    ).fetchall()
    return [str(r["annotator_id"]) for r in rows]


def get_argument(conn: sqlite3.Connection, campaign_id: str, argument_id: str) -> ArgumentItem | None:
    r = conn.execute(
        "SELECT * FROM campaign_arguments WHERE campaign_id = ? AND argument_id = ?",
        (campaign_id, argument_id),
    ).fetchone()
    if r is None:
        return None
    return ArgumentItem(str(r["argument_id"]), str(r["source"]), str(r["issue"]), str(r["text"]))


def list_batches(conn: sqlite3.Connection, campaign_id: str) -> list[list[str]]:
    rows = conn.execute(
        "SELECT batch_index, argument_id FROM batches WHERE campaign_id = ? ORDER BY batch_index, position",
        (campaign_id,),
    ).fetchall()
    out: list[list[str]] = []
    for r in rows:
        idx = int(r["batch_index"])
        while len(out) <= idx:
            out.append([])
        out[idx].append(str(r["argument_id"]))
    return out


def insert_issue(conn: sqlite3.Connection, item: IssueItem) -> None:
    with conn:
        conn.execute(
            """
            INSERT INTO issues (issue_key, campaign_id, annotator_id, argument_id, batch_index, issued_at)
            VALUES (?, ?, ?, ?, ?, ?)
            """,
            (item.issue_key, item.campaign_id, item.annotator_id, item.argument_id, item.batch_index, item.issued_at),
        )


def latest_issue(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, argument_id: str) -> IssueItem | None:
    r = conn.execute(
        """
        SELECT * FROM issues WHERE campaign_id = ? AND annotator_id = ? AND argument_id = ?
        ORDER BY issued_at DESC, rowid DESC LIMIT 1
        """,
        (campaign_id, annotator_id, argument_id),
    ).fetchone()
    if r is None:
        return None
    return IssueItem(
        issue_key=str(r["issue_key"]),
        campaign_id=str(r["campaign_id"]),
        annotator_id=str(r["annotator_id"]),
        argument_id=str(r["argument_id"]),
        batch_index=int(r["batch_index"]),
        issued_at=str(r["issued_at"]),
    )


def get_issue(conn: sqlite3.Connection, issue_key: str) -> IssueItem | None:
    r = conn.execute("SELECT * FROM issues WHERE issue_key = ?", (issue_key,)).fetchone()
    if r is None:
        return None
    return IssueItem(
        issue_key=str(r["issue_key"]),
        campaign_id=str(r["campaign_id"]),
        annotator_id=str(r["annotator_id"]),
        argument_id=str(r["argument_id"]),
        batch_index=int(r["batch_index"]),
        issued_at=str(r["issued_at"]),
    )


def current_submission(
    conn: sqlite3.Connection, campaign_id: str, annotator_id: str, argument_id: str
) -> SubmissionItem | None:
    r = conn.execute(
        """
        SELECT * FROM submissions
        WHERE campaign_id = ? AND annotator_id = ? AND argument_id = ? AND superseded_by IS NULL
        """,
        (campaign_id, annotator_id, argument_id),
    ).fetchone()
    if r is None:
        return None
    return _submission(r)


def submission_by_issue_key(conn: sqlite3.Connection, issue_key: str) -> SubmissionItem | None:
    r = conn.execute("SELECT * FROM submissions WHERE issue_key = ? ORDER BY id LIMIT 1", (issue_key,)).fetchone()
    if r is None:
        return None
    return _submission(r)


def list_current_submissions(conn: sqlite3.Connection, campaign_id: str) -> list[SubmissionItem]:
    rows = conn.execute(
        "SELECT * FROM submissions WHERE campaign_id = ? AND superseded_by IS NULL ORDER BY id",
        (campaign_id,),
    ).fetchall()
    return [_submission(r) for r in rows]


def list_submission_history(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, argument_id: str) -> list[SubmissionItem]:
    rows = conn.execute(
        "SELECT * FROM submissions WHERE campaign_id = ? AND annotator_id = ? AND argument_id = ? ORDER BY id",
        (campaign_id, annotator_id, argument_id),
    ).fetchall()
    return [_submission(r) for r in rows]


def answered_in_batch(conn: sqlite3.Connection, campaign_id: str, annotator_id: str, batch_index: int) -> set[str]:
    rows = conn.execute(
        """
        SELECT DISTINCT argument_id FROM submissions
        WHERE campaign_id = ? AND annotator_id = ? AND batch_index = ? AND superseded_by IS NULL
        """,
        (campaign_id, annotator_id, batch_index),
    ).fetchall()
    return {str(r["argument_id"]) for r in rows}


def record_submission(
    conn: sqlite3.Connection,
    *,
    campaign_id: str,
    annotator_id: str,
    argument_id: str,
    batch_index: int,
    issue_key: str | None,
    record: dict[str, Any],
    submitted_at: str,
    completes_batch: bool,
) -> int:
    """Append, supersede the previous row and mark batch completion atomically."""
    with conn:
        previous = conn.execute(
            """
            SELECT id FROM submissions
            WHERE campaign_id = ? AND annotator_id = ? AND argument_id = ? AND superseded_by IS NULL
            """,
            (campaign_id, annotator_id, argument_id),
        ).fetchone()
        cur = conn.execute(
            """
            INSERT INTO submissions (campaign_id, annotator_id, argument_id, batch_index, issue_key, record_json, submitted_at)
            VALUES (?, ?, ?, ?, ?, ?, ?)
            """,
            (campaign_id, annotator_id, argument_id, batch_index, issue_key, json.dumps(record, sort_keys=True), submitted_at),
        )
        new_id = int(cur.lastrowid)
        if previous is not None:
            conn.execute("UPDATE submissions SET superseded_by = ? WHERE id = ?", (new_id, int(previous["id"])))
        if completes_batch:
            conn.execute(
                """
                INSERT OR IGNORE INTO batch_completions (campaign_id, annotator_id, batch_index, completed_at)
                VALUES (?, ?, ?, ?)
                """,
                (campaign_id, annotator_id, batch_index, submitted_at),
            )
    return new_id


def list_completions(conn: sqlite3.Connection, campaign_id: str, annotator_id: str) -> dict[int, str]:
    rows = conn.execute(
        """
        SELECT batch_index, completed_at FROM batch_completions
        WHERE campaign_id = ? AND annotator_id = ? ORDER BY batch_index
        """,
        (campaign_id, annotator_id),
    ).fetchall()
    return {int(r["batch_index"]): str(r["completed_at"]) for r in rows}
