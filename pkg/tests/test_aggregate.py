import io

import numpy as np
import pytest

from app.core.aggregate import (
    AggregationError,
    LabelMatrix,
    Strategy,
    aggregate_in_rating,
    aggregate_strategy,
    close_matrix,
    compare_aggregations,
)
from app.core.taxonomy import DIMENSION_ORDER, make_record


def _votes_for(pattern):
    """pattern: argument -> list of (in_rating, yes codes) per annotator."""
    records = []
    for a, rows in pattern.items():
        for j, (in_rating, yes) in enumerate(rows):
            records.append(make_record(argument_id=a, annotator_id=f"ann{j}", in_rating=in_rating, yes=yes))
    return records


def test_conservative_counts_on_fixture(fixture_store):
    gold = aggregate_strategy(fixture_store.records(), "conservative")
    assert gold.provenance == "conservative"
    assert gold.yes_count("IN") == 5
    assert gold.yes_count("TE") == 2
    assert gold.yes_count("UM") == 0
    assert gold.row("arg4")["RU"] is True
    assert gold.is_closed()


def test_majority_and_liberal_on_fixture(fixture_store):
    majority = aggregate_strategy(fixture_store.records(), Strategy.MAJORITY)
    assert majority.yes_count("IN") == 4
    assert majority.yes_count("EI") == 1
    assert majority.yes_count("ED") == 0
    assert majority.yes_count("OR") == 1
    assert majority.yes_count("DO") == 0

    liberal = aggregate_strategy(fixture_store.records(), Strategy.LIBERAL)
    assert liberal.yes_count("IN") == 2
    assert liberal.yes_count("TE") == 1
    assert liberal.yes_count("MC") == 0


def test_strategies_are_nested(fixture_store):
    records = fixture_store.records()
    lib = aggregate_strategy(records, "liberal").values
    maj = aggregate_strategy(records, "majority").values
    con = aggregate_strategy(records, "conservative").values
    assert (lib <= maj).all()
    assert (maj <= con).all()


def test_majority_threshold_with_even_annotator_count():
    records = _votes_for({"x": [(2, ["TE", "EI"]), (2, ["TE", "EI"]), (3, []), (3, [])]})
    gold = aggregate_strategy(records, "majority")
    # 2 of 4 is not a majority: ceil((4 + 1) / 2) = 3
    assert gold.yes_count("TE") == 0
    assert gold.yes_count("IN") == 0


def test_closure_is_applied_after_thresholding():
    # EI is yes by majority but TE is not: closure lifts TE and IN.
    records = _votes_for(
        {
            "x": [(2, ["TE", "EI"]), (3, ["EI"]), (3, ["EI"])],
        }
    )
    gold = aggregate_strategy(records, "majority")
    row = gold.row("x")
    assert row["EI"] is True
    assert row["TE"] is True
    assert row["IN"] is True


def test_unequal_annotator_counts():
    records = _votes_for({"x": [(3, []), (3, [])], "y": [(3, []), (3, []), (2, ["OR", "DO"])]})
    with pytest.raises(AggregationError):
        aggregate_strategy(records, "conservative")
    gold = aggregate_strategy(records, "conservative", unequal="per-argument")
    assert gold.row("y")["DO"] is True


def test_single_annotator_is_an_error():
    records = _votes_for({"x": [(3, [])]})
    with pytest.raises(AggregationError):
        aggregate_strategy(records, "conservative")


def test_in_rating_three_levels(fixture_store):
    records = fixture_store.records()
    assert aggregate_in_rating(records, "conservative") == {
        "arg1": 2, "arg2": 3, "arg3": 1, "arg4": 2, "arg5": 2, "arg6": 2,
    }
    assert aggregate_in_rating(records, "liberal")["arg4"] == 3
    majority = aggregate_in_rating(records, "majority")
    assert majority["arg5"] == 3
    assert majority["arg3"] == 2


def test_in_rating_majority_without_mode_uses_median():
    records = _votes_for({"x": [(1, ["TE"]), (2, ["TE"]), (3, [])], "y": [(1, ["TE"]), (2, ["TE"])]})
    out = aggregate_in_rating(records, "majority")
    assert out["x"] == 2
    assert out["y"] == 1


def test_close_matrix():
    values = np.zeros((1, len(DIMENSION_ORDER)), dtype=np.int8)
    values[0, DIMENSION_ORDER.index("CR")] = 1
    closed = close_matrix(values)
    assert closed[0, DIMENSION_ORDER.index("MI")] == 1
    assert closed[0, DIMENSION_ORDER.index("IN")] == 1
    assert closed.sum() == 3


def test_label_matrix_tsv_and_reindex(fixture_store):
    gold = aggregate_strategy(fixture_store.records(), "conservative")
    buf = io.StringIO()
    gold.to_tsv(buf)
    buf.seek(0)
    back = LabelMatrix.from_tsv(buf)
    assert back.argument_ids == gold.argument_ids
    assert np.array_equal(back.values, gold.values)

    sub = gold.reindex(["arg6", "arg1"])
    assert sub.argument_ids == ("arg6", "arg1")
    with pytest.raises(AggregationError):
        gold.reindex(["nope"])


def test_aggregation_is_deterministic(fixture_store):
    first, second = io.StringIO(), io.StringIO()
    aggregate_strategy(fixture_store.records(), "conservative").to_tsv(first)
    aggregate_strategy(list(fixture_store.records()), "conservative").to_tsv(second)
    assert first.getvalue() == second.getvalue()


def test_compare_identical_aggregations_is_one(fixture_store):
    gold = aggregate_strategy(fixture_store.records(), "conservative")
    result = compare_aggregations(gold, gold.reindex(reversed(gold.argument_ids)))
    assert result[DIMENSION_ORDER[0]].alpha == pytest.approx(1.0)


_TREE = {"TE": ["EI", "ED"], "MC": ["MS", "MO"], "MI": ["UM", "MR", "CR"], "OR": ["DO"]}


def _random_vote(rng):
    in_rating = int(rng.integers(1, 4))
    if in_rating == 3:
        return in_rating, []
    cores = [c for c in _TREE if rng.random() < 0.4] or [str(rng.choice(list(_TREE)))]
    yes = list(cores)
    for c in cores:
        yes.extend(s for s in _TREE[c] if rng.random() < 0.5)
    return in_rating, yes


@pytest.mark.parametrize("annotators", [2, 3, 4, 5])
def test_strategies_are_nested_on_random_votes(annotators):
    rng = np.random.default_rng(annotators)
    pattern = {f"a{i}": [_random_vote(rng) for _ in range(annotators)] for i in range(200)}
    records = _votes_for(pattern)
    lib = aggregate_strategy(records, "liberal").values
    maj = aggregate_strategy(records, "majority").values
    con = aggregate_strategy(records, "conservative").values
    assert (lib <= maj).all()
    assert (maj <= con).all()


def test_duplicate_vote_is_logged_and_later_record_wins(caplog):
    records = _votes_for({"x": [(3, []), (3, [])]})
    records.append(make_record(argument_id="x", annotator_id="ann0", in_rating=1, yes=["TE"]))
    with caplog.at_level("WARNING", logger="app.core.votes"):
        gold = aggregate_strategy(records, "conservative")
    assert "1 duplicate (argument, annotator) records" in caplog.text
    assert "x by ann0" in caplog.text
    assert gold.row("x")["TE"] is True
