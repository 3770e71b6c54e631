from datetime import datetime, timedelta, timezone

import pytest

from app import create_app
from app.core.campaign import CampaignError, plan_batches
from app.core.corpus import CorpusStore

from conftest import FIXTURES

ADMIN = {"Authorization": "Bearer admin-secret"}
A1 = {"Authorization": "Bearer tok-a1"}
A2 = {"Authorization": "Bearer tok-a2"}

ARGUMENTS = [
    {"argument_id": f"x{i}", "source": "gaq-debates", "issue": "school uniforms", "text": f"Argument number {i}."}
    for i in range(5)
]


class _Clock:
    def __init__(self) -> None:
        self.now = datetime(2026, 3, 2, 9, 0, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now


@pytest.fixture
def clock():
    return _Clock()


@pytest.fixture
def make_app(tmp_path, monkeypatch, clock):
    roster = tmp_path / "roster.tsv"
    roster.write_text("annotator_id\ttoken\n# staff\na1\ttok-a1\na2\ttok-a2\n", encoding="utf-8")
    monkeypatch.setenv("STORAGE_DIR", str(tmp_path / "storage"))
    monkeypatch.setenv("DATABASE_PATH", str(tmp_path / "campaigns.sqlite3"))
    monkeypatch.setenv("CORPUS_DIR", str(tmp_path / "corpus"))
    monkeypatch.setenv("ROSTER_PATH", str(roster))
    monkeypatch.setenv("APW_ADMIN_TOKEN", "admin-secret")

    def _make():
        app = create_app()
        app.config.update(TESTING=True, CLOCK=clock)
        return app

    return _make


@pytest.fixture
def client(make_app):
    return make_app().test_client()


def _create(client, **overrides):
    body = {"campaign_id": "c1", "seed": 7, "batch_size": 2, "arguments": ARGUMENTS}
    body.update(overrides)
    return client.post("/campaigns", json=body, headers=ADMIN)


def _answer(client, headers, item, in_rating=3, flags=None, ru_text="", issue_key=True):
    payload = {"argument_id": item["argument_id"], "in_rating": in_rating, "flags": flags or {}, "ru_text": ru_text}
    if issue_key:
        payload["issue_key"] = item["issue_key"]
    return client.post("/campaigns/c1/submit", json=payload, headers=headers)


def test_plan_batches_sizes():
    sizes = [len(b) for b in plan_batches([f"a{i}" for i in range(10)], 3, seed=0)]
    assert sizes == [3, 3, 2, 2]
    big = plan_batches([f"a{i}" for i in range(2191)], 157, seed=0)
    assert len(big) == 14
    assert sorted({len(b) for b in big}) == [156, 157]
    assert plan_batches(["a", "b", "c"], 2, seed=4) == plan_batches(["a", "b", "c"], 2, seed=4)
    with pytest.raises(CampaignError):
        plan_batches([], 2)


def test_create_requires_admin_and_seed(client):
    assert client.post("/campaigns", json={"seed": 1}).status_code == 401
    assert client.post("/campaigns", json={"seed": 1}, headers=A1).status_code == 401

    resp = client.post("/campaigns", json={"arguments": ARGUMENTS}, headers=ADMIN)
    assert resp.status_code == 400
    assert resp.get_json()["error"]["code"] == "missing_seed"

    resp = _create(client)
    assert resp.status_code == 201
    data = resp.get_json()
    assert data["campaign"]["id"] == "c1"
    assert data["campaign"]["pacing_window_hours"] == 24.0
    assert data["progress"]["batch_sizes"] == [2, 2, 1]
    assert sorted(data["progress"]["annotators"]) == ["a1", "a2"]

    again = _create(client)
    assert again.status_code == 409
    assert again.get_json()["error"]["code"] == "campaign_exists"


def test_create_without_admin_token_is_disabled(make_app, monkeypatch):
    monkeypatch.delenv("APW_ADMIN_TOKEN")
    client = make_app().test_client()
    resp = _create(client)
    assert resp.status_code == 403
    assert resp.get_json()["error"]["code"] == "admin_disabled"


def test_create_from_corpus_store(make_app, tmp_path):
    with CorpusStore(tmp_path / "corpus") as store:
        with open(FIXTURES / "arguments.tsv", encoding="utf-8", newline="") as fh:
            store.ingest_arguments(fh)
    client = make_app().test_client()
    resp = client.post("/campaigns", json={"campaign_id": "c1", "seed": 3, "batch_size": 4}, headers=ADMIN)
    assert resp.status_code == 201
    assert resp.get_json()["progress"]["batch_sizes"] == [3, 3]


def test_next_requires_roster_token(client):
    _create(client)
    assert client.get("/campaigns/c1/next").status_code == 401
    assert client.get("/campaigns/c1/next", headers={"Authorization": "Bearer nobody"}).status_code == 401
    resp = client.get("/campaigns/c1/next?annotator=a2", headers=A1)
    assert resp.status_code == 403
    missing = client.get("/campaigns/nope/next", headers=A1)
    assert missing.status_code == 404
    assert missing.get_json()["error"]["code"] == "unknown_campaign"


def test_batch_flow_and_pacing(client, clock):
    _create(client)
    first = client.get("/campaigns/c1/next", headers=A1).get_json()
    assert first["status"] == "item"
    assert first["progress"]["batch_index"] == 0
    assert first["progress"]["batch_total"] == 2
    # asking again hands out the same item
    assert client.get("/campaigns/c1/next", headers=A1).get_json()["item"] == first["item"]

    resp = _answer(client, A1, first["item"]).get_json()
    assert resp["ok"] is True
    assert resp["batch_completed"] is False
    second = resp["next"]
    assert second["status"] == "item"
    assert second["progress"]["batch_done"] == 1
    assert second["item"]["argument_id"] != first["item"]["argument_id"]

    clock.now += timedelta(hours=1)
    resp = _answer(client, A1, second["item"]).get_json()
    assert resp["batch_completed"] is True
    blocked = resp["next"]
    assert blocked["status"] == "pacing-block"
    assert blocked["unblock_at"] == (clock.now + timedelta(hours=24)).isoformat()
    assert blocked["progress"]["batches_done"] == 1

    # the other annotator is not held back
    assert client.get("/campaigns/c1/next", headers=A2).get_json()["progress"]["batch_index"] == 0

    clock.now += timedelta(hours=23, minutes=59)
    assert client.get("/campaigns/c1/next", headers=A1).get_json()["status"] == "pacing-block"
    clock.now += timedelta(minutes=1)
    unblocked = client.get("/campaigns/c1/next", headers=A1).get_json()
    assert unblocked["status"] == "item"
    assert unblocked["progress"]["batch_index"] == 1


def test_all_batches_done(client, clock):
    _create(client, batch_size=5)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()
    for _ in range(5):
        resp = _answer(client, A1, item["item"]).get_json()
        item = resp["next"]
    assert item["status"] == "done"
    assert item["progress"]["batches_done"] == 1


def test_validation_failures_are_422(client):
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]

    resp = _answer(client, A1, item, in_rating=2, flags={"EI": True})
    assert resp.status_code == 422
    body = resp.get_json()
    assert body["error"]["code"] == "validation_failed"
    assert "sub_without_parent" in [v["rule"] for v in body["error"]["details"]]

    resp = _answer(client, A1, item, in_rating=2, flags={"OR": True, "RU": True})
    assert [v["rule"] for v in resp.get_json()["error"]["details"]] == ["ru_without_text"]

    resp = _answer(client, A1, item, in_rating=7)
    assert resp.get_json()["error"]["details"][0]["rule"] == "structural"

    assert client.post("/campaigns/c1/submit", data="nope", headers=A1).status_code == 400

    # nothing was stored
    progress = client.get("/campaigns/c1/progress", headers=ADMIN).get_json()
    assert progress["annotators"]["a1"]["current_batch_done"] == 0


def test_warnings_do_not_block(client):
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    resp = _answer(client, A1, item, in_rating=2, flags={"MC": True})
    assert resp.status_code == 200
    assert resp.get_json()["warnings"] == ["MC is yes without any sub-dimension"]


def test_issue_key_makes_submit_idempotent(client):
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    first = _answer(client, A1, item).get_json()
    retry = _answer(client, A1, item).get_json()
    assert retry["duplicate"] is True
    assert retry["submission_id"] == first["submission_id"]

    stale = _answer(client, A1, {**item, "issue_key": "bogus"})
    assert stale.status_code == 409
    assert stale.get_json()["error"]["code"] == "stale_item"

    # a2 cannot submit with a1's key
    assert _answer(client, A2, item).status_code == 409


def test_page_reload_does_not_double_submit(client):
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    # reloading before submitting hands back the same item and key
    assert client.get("/campaigns/c1/next", headers=A1).get_json()["item"] == item

    first = _answer(client, A1, item).get_json()
    assert first["duplicate"] is False
    after_reload = client.get("/campaigns/c1/next", headers=A1).get_json()
    assert after_reload["item"]["argument_id"] != item["argument_id"]
    assert after_reload["progress"]["batch_done"] == 1

    # the browser re-sends the form it had before the reload
    again = _answer(client, A1, item).get_json()
    assert again["duplicate"] is True
    assert again["next"]["progress"]["batch_done"] == 1

    body = client.get("/campaigns/c1/export/annotations", headers=ADMIN).get_data(as_text=True)
    assert [line.split("\t")[0] for line in body.splitlines()[1:]] == [item["argument_id"]]


def test_revision_overwrites_with_audit(client):
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    _answer(client, A1, item)
    revised = _answer(client, A1, item, in_rating=2, flags={"TE": True, "ED": True}, issue_key=False).get_json()
    assert revised["revision"] is True
    assert revised["batch_completed"] is False

    body = client.get("/campaigns/c1/export/annotations", headers=ADMIN).get_data(as_text=True)
    rows = [line.split("\t") for line in body.splitlines()[1:]]
    assert len(rows) == 1
    assert rows[0][0] == item["argument_id"]
    assert rows[0][3] == "2"

    query = f"/campaigns/c1/history?annotator=a1&argument={item['argument_id']}"
    history = client.get(query, headers=ADMIN).get_json()["submissions"]
    assert [h["record"]["IN"] for h in history] == [3, 2]
    assert history[0]["superseded_by"] == history[1]["submission_id"] == revised["submission_id"]
    assert history[1]["superseded_by"] is None
    assert history[0]["issue_key"] == item["issue_key"]

    assert client.get(query, headers=A1).status_code == 401
    assert client.get("/campaigns/c1/history?annotator=a1", headers=ADMIN).status_code == 400


def test_revision_can_be_disabled(client):
    _create(client, allow_revision=False)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    _answer(client, A1, item)
    resp = _answer(client, A1, item, issue_key=False)
    assert resp.status_code == 409
    assert resp.get_json()["error"]["code"] == "already_submitted"


def test_submissions_survive_restart(make_app):
    client = make_app().test_client()
    _create(client)
    item = client.get("/campaigns/c1/next", headers=A1).get_json()["item"]
    _answer(client, A1, item)

    restarted = make_app().test_client()
    state = restarted.get("/campaigns/c1/next", headers=A1).get_json()
    assert state["progress"]["batch_done"] == 1
    assert state["item"]["argument_id"] != item["argument_id"]


def test_exports(client):
    _create(client)
    assert client.get("/campaigns/c1/export/agreement", headers=ADMIN).status_code == 409

    for headers, te in ((A1, True), (A2, False)):
        state = client.get("/campaigns/c1/next", headers=headers).get_json()
        for _ in range(2):
            flags = {"TE": True, "EI": True} if te else {}
            resp = _answer(client, headers, state["item"], in_rating=2 if te else 3, flags=flags).get_json()
            state = resp["next"]

    gold = client.get("/campaigns/c1/export/conservative-gold", headers=ADMIN)
    assert gold.status_code == 200
    assert gold.get_data(as_text=True).startswith("argument_id\tIN\tTE")

    agreement = client.get("/campaigns/c1/export/agreement?format=json", headers=ADMIN)
    assert agreement.status_code == 200
    assert agreement.mimetype == "application/json"

    correlations = client.get("/campaigns/c1/export/correlations?format=md", headers=ADMIN)
    assert correlations.status_code == 200
    assert correlations.mimetype == "text/markdown"

    assert client.get("/campaigns/c1/export/everything", headers=ADMIN).status_code == 404
    assert client.get("/campaigns/c1/export/agreement?format=xlsx", headers=ADMIN).status_code == 400
    assert client.get("/campaigns/c1/export/agreement", headers=A1).status_code == 401


def test_guidelines_endpoint(client):
    data = client.get("/api/guidelines").get_json()
    assert data["ok"] is True
    assert [d["id"] for d in data["dimensions"]][:2] == ["IN", "TE"]
