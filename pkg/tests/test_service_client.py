import importlib

import pytest

from app.integrations.service_client import CampaignAPIError, CampaignClient


class _Resp:
    def __init__(self, status_code, payload, headers=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.headers = headers or {}
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


@pytest.fixture
def client_mod():
    return importlib.import_module("app.integrations.service_client")


def test_create_and_submit_send_bearer_and_body(client_mod, monkeypatch):
    calls = []

    def fake_post(url, **kwargs):
        calls.append((url, kwargs))
        if url.endswith("/campaigns"):
            return _Resp(201, {"ok": True, "campaign": {"id": "c1"}})
        return _Resp(200, {"ok": True, "submission_id": 4, "next": {"status": "done"}})

    monkeypatch.setattr(client_mod.requests, "post", fake_post)

    client = CampaignClient("http://svc:5000/", token="admin-secret", timeout=5)
    created = client.create_campaign(seed=3, campaign_id="c1", batch_size=10)
    assert created["campaign"]["id"] == "c1"

    url, kwargs = calls[0]
    assert url == "http://svc:5000/campaigns"
    assert kwargs["headers"] == {"Authorization": "Bearer admin-secret"}
    assert kwargs["json"] == {"seed": 3, "campaign_id": "c1", "batch_size": 10}
    assert kwargs["timeout"] == 5

    result = client.submit("c1", argument_id="x1", issue_key="k1", in_rating=2, flags={"TE": True})
    assert result["submission_id"] == 4
    assert calls[1][0] == "http://svc:5000/campaigns/c1/submit"
    assert calls[1][1]["json"] == {
        "argument_id": "x1",
        "issue_key": "k1",
        "in_rating": 2,
        "flags": {"TE": True},
        "ru_text": "",
    }


def test_error_envelope_becomes_exception(client_mod, monkeypatch):
    details = [{"rule": "sub_without_parent", "dimension": "EI", "message": "EI needs TE"}]

    def fake_post(url, **kwargs):
        return _Resp(
            422,
            {"ok": False, "error": {"code": "validation_failed", "human_message": "The annotation breaks the guideline rules.", "details": details}},
        )

    monkeypatch.setattr(client_mod.requests, "post", fake_post)
    client = CampaignClient("http://svc", token="tok-a1")
    with pytest.raises(CampaignAPIError) as exc:
        client.submit("c1", argument_id="x1", issue_key=None, in_rating=2, flags={"EI": True})
    assert exc.value.status == 422
    assert exc.value.code == "validation_failed"
    assert exc.value.details == details
    assert "guideline" in str(exc.value)


def test_non_json_error_falls_back_to_text(client_mod, monkeypatch):
    monkeypatch.setattr(client_mod.requests, "get", lambda url, **kw: _Resp(502, None, text="Bad Gateway"))
    client = CampaignClient("http://svc", token="tok")
    with pytest.raises(CampaignAPIError) as exc:
        client.progress("c1")
    assert str(exc.value) == "Bad Gateway"
    assert exc.value.code is None


def test_next_item_passes_annotator_param(client_mod, monkeypatch):
    seen = {}

    def fake_get(url, **kwargs):
        seen.update(kwargs, url=url)
        return _Resp(200, {"ok": True, "status": "pacing-block", "unblock_at": "2026-03-03T10:00:00+00:00"})

    monkeypatch.setattr(client_mod.requests, "get", fake_get)
    client = CampaignClient("http://svc", token="tok-a1")
    state = client.next_item("c1", annotator_id="a1")
    assert state["status"] == "pacing-block"
    assert seen["url"] == "http://svc/campaigns/c1/next"
    assert seen["params"] == {"annotator": "a1"}


def test_export_reads_mimetype(client_mod, monkeypatch):
    def fake_get(url, **kwargs):
        assert kwargs["params"] == {"format": "md"}
        return _Resp(200, None, headers={"Content-Type": "text/markdown; charset=utf-8"}, text="**Table**\n")

    monkeypatch.setattr(client_mod.requests, "get", fake_get)
    result = CampaignClient("http://svc", token="admin").export("c1", "agreement", "md")
    assert result.mimetype == "text/markdown"
    assert result.body == "**Table**\n"


def test_unexpected_success_body(client_mod, monkeypatch):
    monkeypatch.setattr(client_mod.requests, "get", lambda url, **kw: _Resp(200, ["not", "a", "dict"]))
    with pytest.raises(CampaignAPIError):
        CampaignClient("http://svc", token="t").guidelines()


def test_history_lists_revisions(client_mod, monkeypatch):
    seen = {}
    rows = [
        {"submission_id": 1, "superseded_by": 2, "record": {"IN": 3}},
        {"submission_id": 2, "superseded_by": None, "record": {"IN": 2}},
    ]

    def fake_get(url, **kwargs):
        seen.update(kwargs, url=url)
        return _Resp(200, {"ok": True, "submissions": rows})

    monkeypatch.setattr(client_mod.requests, "get", fake_get)
    history = CampaignClient("http://svc", token="admin").history("c1", "a1", "x3")
    assert [h["submission_id"] for h in history] == [1, 2]
    assert seen["url"] == "http://svc/campaigns/c1/history"
    assert seen["params"] == {"annotator": "a1", "argument": "x3"}
    assert seen["headers"]["Authorization"] == "Bearer admin"
