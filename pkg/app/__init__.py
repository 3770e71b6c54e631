from __future__ import annotations

import os
from datetime import datetime, timezone
from pathlib import Path

from flask import Flask

from .db import init_db
from .web.routes import web


def _env_bool(name: str, default: bool = False) -> bool:
    raw = os.getenv(name)
    if raw is None:
        return default
    v = str(raw).strip().lower()
    if v in {"1", "true", "yes", "y", "on"}:
        return True
    if v in {"0", "false", "no", "n", "off"}:
        return False
    return default


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


def create_app() -> Flask:
    # Load `.env` if present; the Flask CLI does this itself but wsgi/tests do not.
    try:
        from dotenv import load_dotenv  # type: ignore

        env_path = Path(__file__).resolve().parent.parent / ".env"
        if env_path.exists():
            load_dotenv(env_path, override=False)
    except Exception:
        pass

    app = Flask(
        __name__,
        template_folder="web/templates",
        static_folder="web/static",
    )

    storage_dir = os.environ.get("STORAGE_DIR", os.path.join(app.instance_path, "storage"))
    app.config.update(
        SECRET_KEY=os.environ.get("SECRET_KEY", "dev"),
        STORAGE_DIR=storage_dir,
        DATABASE_PATH=os.environ.get("DATABASE_PATH", os.path.join(storage_dir, "campaigns.sqlite3")),
        CORPUS_DIR=os.environ.get("CORPUS_DIR", os.path.join(storage_dir, "corpus")),
        ROSTER_PATH=os.environ.get("ROSTER_PATH", os.path.join(storage_dir, "roster.tsv")),
        ADMIN_TOKEN=os.environ.get("APW_ADMIN_TOKEN") or None,
        PACING_WINDOW_HOURS=float(os.environ.get("APW_PACING_WINDOW_HOURS", "24")),
        ALLOW_REVISION=_env_bool("APW_ALLOW_REVISION", default=True),
        DEFAULT_BATCH_SIZE=int(os.environ.get("APW_DEFAULT_BATCH_SIZE", "150")),
        MAX_CONTENT_LENGTH=int(os.environ.get("MAX_CONTENT_LENGTH", str(1024 * 1024 * 64))),  # 64MB
        CLOCK=_utc_now,
    )

    os.makedirs(app.instance_path, exist_ok=True)
    os.makedirs(app.config["STORAGE_DIR"], exist_ok=True)
    os.makedirs(os.path.dirname(os.path.abspath(app.config["DATABASE_PATH"])), exist_ok=True)

    init_db(app)

    app.register_blueprint(web)

    return app
