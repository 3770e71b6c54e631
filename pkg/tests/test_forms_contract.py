import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from app.core.campaign import protocol_violations, record_from_payload
from app.core.taxonomy import FLAG_DIMENSIONS
from app.web.forms import form_schema

GATE = Path(__file__).resolve().parents[1] / "app" / "web" / "static" / "gate.js"

pytestmark = pytest.mark.skipif(shutil.which("node") is None, reason="node is needed to run static/gate.js")

RUNNER = """
const { createGate } = require(process.argv[process.argv.length - 1]);
const input = JSON.parse(require("fs").readFileSync(0, "utf8"));
const gate = createGate(input.schema);
const item = { argument_id: "x", issue_key: "k" };
const out = input.states.map((s) => ({
  visible: gate.visible(s),
  normalized: gate.normalize(s),
  messages: gate.messages(s),
  payload: gate.payload(s, item),
}));
process.stdout.write(JSON.stringify(out));
"""

RATINGS = [None, 1, 2, 3]
TEXTS = ["", "   ", "quotes a dictionary at length"]


def _gate(states):
    proc = subprocess.run(
        ["node", "-e", RUNNER, str(GATE)],
        input=json.dumps({"schema": form_schema(), "states": states}),
        capture_output=True,
        text=True,
        timeout=60,
        check=True,
    )
    return json.loads(proc.stdout)


def _state(in_rating=None, checked=(), ru_text=""):
    return {"in_rating": in_rating, "checked": list(checked), "ru_text": ru_text}


def _random_states(n, seed=0):
    rng = np.random.default_rng(seed)
    return [
        _state(
            RATINGS[int(rng.integers(len(RATINGS)))],
            [d.value for d in FLAG_DIMENSIONS if rng.random() < 0.3],
            TEXTS[int(rng.integers(len(TEXTS)))],
        )
        for _ in range(n)
    ]


def test_browser_gate_matches_service_validation():
    states = _random_states(300)
    for state, out in zip(states, _gate(states)):
        record, errors = record_from_payload(out["payload"], "a1", "b0")
        accepted = record is not None and not errors and not protocol_violations(record)[0]
        assert (not out["messages"]) == accepted, state


def test_rating_three_hides_every_reason():
    (out,) = _gate([_state(3, ["TE", "EI"], "x")])
    assert out["visible"] == ["IN"]
    assert out["normalized"]["checked"] == []
    assert out["normalized"]["ru_text"] == ""
    assert out["messages"] == {}


def test_subs_follow_their_core():
    (out,) = _gate([_state(2, ["MI", "UM", "ED"])])
    assert out["visible"][:3] == ["IN", "TE", "MC"]
    assert "UM" in out["visible"] and "CR" in out["visible"]
    assert "ED" not in out["visible"]
    assert out["normalized"]["checked"] == ["MI", "UM"]


def test_messages_name_the_control():
    empty, no_reason, ru = _gate([_state(), _state(1), _state(2, ["OR", "RU"])])
    assert empty["messages"] == {"IN": "choose how appropriate the argument is"}
    assert set(no_reason["messages"]) == {"IN"}
    assert set(ru["messages"]) == {"ru_text"}


def test_payload_carries_every_flag():
    (out,) = _gate([_state(2, ["OR", "RU"], "odd")])
    payload = out["payload"]
    assert payload["argument_id"] == "x"
    assert payload["issue_key"] == "k"
    assert payload["flags"]["RU"] is True
    assert payload["flags"]["TE"] is False
    assert len(payload["flags"]) == len(FLAG_DIMENSIONS)
    assert payload["ru_text"] == "odd"
