from app import create_app

from conftest import GOLDEN


def test_home_returns_200(tmp_path, monkeypatch):
    monkeypatch.setenv("DATABASE_PATH", str(tmp_path / "smoke.sqlite3"))
    monkeypatch.setenv("STORAGE_DIR", str(tmp_path / "storage"))

    app = create_app()
    app.config.update(TESTING=True)

    client = app.test_client()
    resp = client.get("/")
    assert resp.status_code == 200

    html = resp.get_data(as_text=True)
    assert 'name="IN"' in html
    assert 'id="reasons"' in html
    assert 'data-subs-of="TE"' in html
    assert 'data-parent="MI"' in html
    assert 'id="ru_text"' in html
    assert 'id="form-schema"' in html
    assert "annotate.js" in html
    # definitions are available as tooltips
    assert "Toxic Emotions" in html


def test_static_script_is_served(tmp_path, monkeypatch):
    monkeypatch.setenv("DATABASE_PATH", str(tmp_path / "smoke.sqlite3"))
    monkeypatch.setenv("STORAGE_DIR", str(tmp_path / "storage"))

    client = create_app().test_client()
    resp = client.get("/static/annotate.js")
    assert resp.status_code == 200
    assert "campaignPath(\"submit\")" in resp.get_data(as_text=True)


def test_guidelines_dimensions_match_golden(tmp_path, monkeypatch):
    monkeypatch.setenv("DATABASE_PATH", str(tmp_path / "smoke.sqlite3"))
    monkeypatch.setenv("STORAGE_DIR", str(tmp_path / "storage"))

    client = create_app().test_client()
    data = client.get("/api/guidelines").get_json()
    rows = ["\t".join([d["id"], d["parent"] or "", d["level"], d["name"]]) for d in data["dimensions"]]

    golden = (GOLDEN / "taxonomy.tsv").read_text(encoding="utf-8").splitlines()
    assert rows == golden[1:]
    assert [r["label"] for r in data["ratings"]] == [
        "fully inappropriate",
        "partially (in)appropriate",
        "fully appropriate",
    ]
