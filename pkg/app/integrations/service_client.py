"""HTTP client for a running campaign service.

Used by the CLI (`workbench campaign ...`) and by scripts that drive
annotators headlessly. Tokens are passed per call and never written to disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import requests


class CampaignAPIError(RuntimeError):
    def __init__(self, message: str, *, status: int, code: str | None = None, details: Any = None) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.details = details


@dataclass(frozen=True)
class ExportResult:
    body: str
    mimetype: str


def _clean_error(resp: requests.Response) -> tuple[str, str | None, Any]:
    """(message, code, details) from the service's error envelope, falling back to the raw body."""
    try:
        payload = resp.json()
    except ValueError:
        text = (resp.text or "").strip()
        return (text or f"HTTP {resp.status_code}"), None, None
    if isinstance(payload, dict):
        err = payload.get("error")
        if isinstance(err, dict):
            msg = err.get("human_message")
            if isinstance(msg, str) and msg.strip():
                return msg.strip(), err.get("code"), err.get("details")
    return json.dumps(payload), None, None


class CampaignClient:
    def __init__(self, base_url: str, *, token: str, timeout: float = 30.0) -> None:
        self.base_url = base_url.rstrip("/")
        self.token = token
        self.timeout = timeout

    def _headers(self) -> dict[str, str]:
        return {"Authorization": f"Bearer {self.token}"}

    def _url(self, path: str) -> str:
        return f"{self.base_url}{path}"

    def _check(self, resp: requests.Response, expected: tuple[int, ...] = (200,)) -> requests.Response:
        if resp.status_code not in expected:
            message, code, details = _clean_error(resp)
            raise CampaignAPIError(message, status=resp.status_code, code=code, details=details)
        return resp

    def _json(self, resp: requests.Response) -> dict[str, Any]:
        try:
            data = resp.json()
        except ValueError as e:
            raise CampaignAPIError("unexpected response format", status=resp.status_code) from e
        if not isinstance(data, dict):
            raise CampaignAPIError("unexpected response format", status=resp.status_code)
        return data

    def guidelines(self) -> dict[str, Any]:
        resp = requests.get(self._url("/api/guidelines"), timeout=self.timeout)
        return self._json(self._check(resp))

    def create_campaign(
        self,
        *,
        seed: int,
        campaign_id: str | None = None,
        batch_size: int | None = None,
        pacing_window_hours: float | None = None,
        allow_revision: bool | None = None,
        annotators: list[str] | None = None,
        arguments: list[dict[str, Any]] | None = None,
    ) -> dict[str, Any]:
        body: dict[str, Any] = {"seed": seed}
        optional = {
            "campaign_id": campaign_id,
            "batch_size": batch_size,
            "pacing_window_hours": pacing_window_hours,
            "allow_revision": allow_revision,
            "annotators": annotators,
            "arguments": arguments,
        }
        body.update({k: v for k, v in optional.items() if v is not None})
        resp = requests.post(self._url("/campaigns"), headers=self._headers(), json=body, timeout=self.timeout)
        return self._json(self._check(resp, (201,)))

    def next_item(self, campaign_id: str, annotator_id: str | None = None) -> dict[str, Any]:
        params = {"annotator": annotator_id} if annotator_id else None
        resp = requests.get(
            self._url(f"/campaigns/{campaign_id}/next"), headers=self._headers(), params=params, timeout=self.timeout
        )
        return self._json(self._check(resp))

    def submit(
        self,
        campaign_id: str,
        *,
        argument_id: str,
        issue_key: str | None,
        in_rating: int,
        flags: dict[str, bool] | None = None,
        ru_text: str = "",
    ) -> dict[str, Any]:
        body = {
            "argument_id": argument_id,
            "issue_key": issue_key,
            "in_rating": in_rating,
            "flags": flags or {},
            "ru_text": ru_text,
        }
        resp = requests.post(
            self._url(f"/campaigns/{campaign_id}/submit"), headers=self._headers(), json=body, timeout=self.timeout
        )
        return self._json(self._check(resp))

    def progress(self, campaign_id: str) -> dict[str, Any]:
        resp = requests.get(self._url(f"/campaigns/{campaign_id}/progress"), headers=self._headers(), timeout=self.timeout)
        return self._json(self._check(resp))

    def history(self, campaign_id: str, annotator_id: str, argument_id: str) -> list[dict[str, Any]]:
        resp = requests.get(
            self._url(f"/campaigns/{campaign_id}/history"),
            headers=self._headers(),
            params={"annotator": annotator_id, "argument": argument_id},
            timeout=self.timeout,
        )
        return list(self._json(self._check(resp)).get("submissions") or [])

    def export(self, campaign_id: str, kind: str, fmt: str = "csv") -> ExportResult:
        resp = requests.get(
            self._url(f"/campaigns/{campaign_id}/export/{kind}"),
            headers=self._headers(),
            params={"format": fmt},
            timeout=self.timeout,
        )
        self._check(resp)
        mimetype = (resp.headers.get("Content-Type") or "text/plain").split(";")[0].strip()
        return ExportResult(body=resp.text, mimetype=mimetype)
