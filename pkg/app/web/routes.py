from __future__ import annotations

import csv
import hmac
import os
from datetime import datetime

from flask import Blueprint, Response, current_app, g, jsonify, render_template, request

from app.core.campaign import (
    EXPORT_KINDS,
    CampaignError,
    CampaignSettings,
    arguments_from_rows,
    create_campaign,
    export,
    next_item,
    progress,
    submission_history,
    submit,
)
from app.core.corpus import CorpusStore, IngestError
from app.web.forms import form_schema


web = Blueprint("web", __name__)


def _now() -> datetime:
    return current_app.config["CLOCK"]()


def _error(code: str, message: str, status: int, details: object = None) -> tuple[Response, int]:
    err: dict[str, object] = {"code": code, "human_message": message}
    if details is not None:
        err["details"] = details
    return jsonify({"ok": False, "error": err}), status


def _load_roster() -> dict[str, str]:
    """token -> annotator_id from the roster TSV (`annotator_id  token`)."""
    path = current_app.config["ROSTER_PATH"]
    if not path or not os.path.exists(path):
        return {}
    roster: dict[str, str] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if len(row) < 2 or not row[0].strip() or row[0].startswith("#") or row[0] == "annotator_id":
                continue
            roster[row[1].strip()] = row[0].strip()
    return roster


def _bearer() -> str | None:
    header = request.headers.get("Authorization", "")
    if header.lower().startswith("bearer "):
        return header[7:].strip() or None
    return None


def _is_admin() -> bool:
    admin = current_app.config.get("ADMIN_TOKEN")
    token = _bearer()
    return bool(admin and token and hmac.compare_digest(admin, token))


def _annotator() -> str | None:
    token = _bearer()
    if token is None:
        return None
    return _load_roster().get(token)


@web.errorhandler(CampaignError)
def _campaign_error(e: CampaignError):
    current_app.logger.info("Campaign request refused (%s): %s", e.code, e)
    return _error(e.code, str(e), e.status, e.details)


@web.get("/")
def index() -> str:
    return render_template("annotate.html", schema=form_schema())


@web.get("/api/guidelines")
def api_guidelines() -> Response:
    return jsonify({"ok": True, **form_schema()})


@web.post("/campaigns")
def api_create_campaign():
    if not current_app.config.get("ADMIN_TOKEN"):
        return _error("admin_disabled", "Campaign creation is disabled (APW_ADMIN_TOKEN is not set).", 403)
    if not _is_admin():
        return _error("unauthorized", "Admin token required.", 401)

    data = request.get_json(silent=True) or {}
    if "seed" not in data:
        return _error("missing_seed", "seed is required to plan batches reproducibly.", 400)
    try:
        seed = int(data["seed"])
        settings = CampaignSettings(
            batch_size=int(data.get("batch_size") or current_app.config["DEFAULT_BATCH_SIZE"]),
            pacing_window_hours=float(data.get("pacing_window_hours") or current_app.config["PACING_WINDOW_HOURS"]),
            allow_revision=bool(data.get("allow_revision", current_app.config["ALLOW_REVISION"])),
        )
    except (TypeError, ValueError):
        return _error("invalid_settings", "seed, batch_size and pacing_window_hours must be numbers.", 400)

    rows = data.get("arguments")
    if rows is not None:
        if not isinstance(rows, list) or not all(isinstance(r, dict) for r in rows):
            return _error("invalid_arguments", "arguments must be an array of objects.", 400)
        arguments = arguments_from_rows(rows)
        corpus_ref = "inline"
    else:
        try:
            store = CorpusStore(current_app.config["CORPUS_DIR"], writable=False)
        except IngestError as e:
            current_app.logger.warning("Corpus store unreadable: %s", e)
            return _error("corpus_unreadable", str(e), 500)
        arguments = store.arguments()
        corpus_ref = str(current_app.config["CORPUS_DIR"])

    annotators = data.get("annotators")
    if annotators is None:
        annotators = sorted(set(_load_roster().values()))
    if not isinstance(annotators, list):
        return _error("invalid_annotators", "annotators must be an array of ids.", 400)

    campaign = create_campaign(
        g._db,
        arguments=arguments,
        annotators=[str(a) for a in annotators],
        seed=seed,
        settings=settings,
        now=_now(),
        campaign_id=(str(data["campaign_id"]).strip() or None) if data.get("campaign_id") else None,
        corpus_ref=corpus_ref,
    )
    return (
        jsonify(
            {
                "ok": True,
                "campaign": {
                    "id": campaign.id,
                    "created_at": campaign.created_at,
                    "seed": campaign.seed,
                    "batch_size": campaign.batch_size,
                    "pacing_window_hours": campaign.pacing_window_hours,
                    "allow_revision": campaign.allow_revision,
                },
                "progress": progress(g._db, campaign.id, _now()),
            }
        ),
        201,
    )


@web.get("/campaigns/<campaign_id>/next")
def api_next(campaign_id: str):
    annotator = _annotator()
    if annotator is None:
        return _error("unauthorized", "Sign in with your annotator token.", 401)
    requested = (request.args.get("annotator") or annotator).strip()
    if requested != annotator:
        return _error("forbidden", "Token does not belong to this annotator.", 403)
    result = next_item(g._db, campaign_id, annotator, _now())
    return jsonify({"ok": True, **result.to_dict()})


@web.post("/campaigns/<campaign_id>/submit")
def api_submit(campaign_id: str):
    annotator = _annotator()
    if annotator is None:
        return _error("unauthorized", "Sign in with your annotator token.", 401)
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        return _error("invalid_json", "Request body must be a JSON object.", 400)

    result = submit(g._db, campaign_id, annotator, data, _now())
    if not result.accepted:
        return _error("validation_failed", "The annotation breaks the guideline rules.", 422, result.violations)

    payload: dict[str, object] = {
        "ok": True,
        "submission_id": result.submission_id,
        "duplicate": result.duplicate,
        "revision": result.revision,
        "batch_completed": result.batch_completed,
        "warnings": result.warnings,
    }
    # Hand back the next step so the page needs one round trip per item.
    payload["next"] = next_item(g._db, campaign_id, annotator, _now()).to_dict()
    return jsonify(payload)


@web.get("/campaigns/<campaign_id>/progress")
def api_progress(campaign_id: str):
    if not _is_admin():
        return _error("unauthorized", "Admin token required.", 401)
    return jsonify({"ok": True, **progress(g._db, campaign_id, _now())})


@web.get("/campaigns/<campaign_id>/history")
def api_history(campaign_id: str):
    if not _is_admin():
        return _error("unauthorized", "Admin token required.", 401)
    annotator = (request.args.get("annotator") or "").strip()
    argument = (request.args.get("argument") or "").strip()
    if not annotator or not argument:
        return _error("missing_parameter", "annotator and argument are required.", 400)
    return jsonify({"ok": True, "submissions": submission_history(g._db, campaign_id, annotator, argument)})


@web.get("/campaigns/<campaign_id>/export/<kind>")
def api_export(campaign_id: str, kind: str):
    if not _is_admin():
        return _error("unauthorized", "Admin token required.", 401)
    if kind not in EXPORT_KINDS:
        return _error("unknown_export", f"Export kind must be one of: {', '.join(EXPORT_KINDS)}.", 404)
    fmt = (request.args.get("format") or "csv").strip().lower()
    if fmt not in ("csv", "md", "json"):
        return _error("invalid_format", "format must be csv, md or json.", 400)
    body, mimetype = export(g._db, campaign_id, kind, fmt)
    return Response(body, mimetype=mimetype)
