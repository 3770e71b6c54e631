import sys
from pathlib import Path

import pytest

# Ensure repo root is importable (so `import app` works without packaging).
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN = ROOT / "tests" / "golden"


@pytest.fixture
def fixture_store():
    """In-memory store with the six-argument, three-annotator fixture corpus."""
    from app.core.corpus import CorpusStore

    store = CorpusStore()
    with open(FIXTURES / "arguments.tsv", encoding="utf-8", newline="") as fh:
        store.ingest_arguments(fh)
    with open(FIXTURES / "annotations.tsv", encoding="utf-8", newline="") as fh:
        report = store.ingest_annotations(fh, validation="strict")
    assert report.count == 18 and not report.rejected
    with open(FIXTURES / "ratings.tsv", encoding="utf-8", newline="") as fh:
        store.ingest_ratings(fh)
    with open(FIXTURES / "pairs.tsv", encoding="utf-8", newline="") as fh:
        store.ingest_pairs(fh)
    return store
