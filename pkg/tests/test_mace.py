import numpy as np
import pytest

from app.core.mace import MaceConfig, MaceError, mace_fit, mace_labels
from app.core.taxonomy import DimensionId, make_record


def _two_items():
    # x1: both annotators say TE; x2: they disagree.
    return [
        make_record(argument_id="x1", annotator_id="a", in_rating=2, yes=["TE"]),
        make_record(argument_id="x1", annotator_id="b", in_rating=2, yes=["TE"]),
        make_record(argument_id="x2", annotator_id="a", in_rating=2, yes=["TE"]),
        make_record(argument_id="x2", annotator_id="b", in_rating=3),
    ]


def test_posteriors_from_uniform_start():
    config = MaceConfig(iterations=0, restarts=1, init_noise=0.0)
    model = mace_fit(_two_items(), config, dimensions=["TE"])
    assert model.posterior_yes("TE") == pytest.approx([0.9, 0.5])


def test_one_em_iteration_matches_hand_computation():
    config = MaceConfig(iterations=1, restarts=1, init_noise=0.0, smoothing=0.1)
    model = mace_fit(_two_items(), config, dimensions=["TE"])
    # expected spam for "a": 0.4 on x1 and 2/3 on x2; s = smoothing / 2
    expected = ((0.4 + 2.0 / 3.0) + 0.05) / (2.0 + 0.1)
    assert model.theta("TE")["a"] == pytest.approx(expected)
    assert len(model.fits[DimensionId.TE].traces[0]) == 2


def test_ties_go_to_no_and_labels_are_closed():
    config = MaceConfig(iterations=0, restarts=1, init_noise=0.0)
    labels = mace_labels(mace_fit(_two_items(), config, dimensions=["TE"]))
    assert labels.provenance == "mace"
    assert labels.row("x1")[DimensionId.TE] is True
    assert labels.row("x1")[DimensionId.IN] is True
    assert labels.row("x2")[DimensionId.TE] is False
    assert labels.is_closed()

    loose = mace_labels(mace_fit(_two_items(), config, dimensions=["TE"]), threshold=0.4)
    assert loose.row("x2")[DimensionId.TE] is True


def test_objective_never_decreases(fixture_store):
    config = MaceConfig(iterations=30, restarts=3, seed=7)
    model = mace_fit(fixture_store.records(), config, dimensions=["IN", "TE", "MC", "OR"])
    for fit in model.fits.values():
        for trace in fit.traces:
            assert trace
            assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))
        assert fit.log_likelihood == pytest.approx(max(t[-1] for t in fit.traces))


def test_constant_column_skips_em(fixture_store):
    model = mace_fit(fixture_store.records(), MaceConfig(restarts=2), dimensions=["UM"])
    fit = model.fits[DimensionId.UM]
    assert fit.traces == [[], []]
    assert np.all(model.posterior_yes("UM") == 0.0)


def test_fit_is_deterministic_and_worker_independent(fixture_store):
    records = fixture_store.records()
    one = mace_fit(records, MaceConfig(iterations=20, restarts=4, seed=3), dimensions=["TE", "MI"])
    again = mace_fit(records, MaceConfig(iterations=20, restarts=4, seed=3), dimensions=["TE", "MI"])
    pooled = mace_fit(records, MaceConfig(iterations=20, restarts=4, seed=3, workers=2), dimensions=["TE", "MI"])
    for dim in ("TE", "MI"):
        assert np.array_equal(one.posterior_yes(dim), again.posterior_yes(dim))
        assert np.array_equal(one.posterior_yes(dim), pooled.posterior_yes(dim))
        assert one.fits[DimensionId(dim)].restart == pooled.fits[DimensionId(dim)].restart
    assert one.log_likelihood == pooled.log_likelihood


def test_theta_stays_inside_unit_interval(fixture_store):
    model = mace_fit(fixture_store.records(), MaceConfig(iterations=10, restarts=2))
    for dim in model.fits:
        assert all(0.0 <= t <= 1.0 for t in model.theta(dim).values())
    assert len(model.fits) == 14


def test_needs_two_annotators():
    records = [make_record(argument_id="x", annotator_id="a", in_rating=3)]
    with pytest.raises(MaceError):
        mace_fit(records)


@pytest.mark.parametrize(
    "kwargs",
    [{"iterations": -1}, {"restarts": 0}, {"smoothing": -0.5}, {"init_noise": 1.0}],
)
def test_config_validation(kwargs):
    with pytest.raises(MaceError):
        MaceConfig(**kwargs)


def test_spammer_gets_the_highest_spam_probability():
    rng = np.random.default_rng(21)
    truth = rng.random(300) < 0.35
    records = []
    for i, t in enumerate(truth):
        votes = {
            "careful1": t ^ (rng.random() < 0.05),
            "careful2": t ^ (rng.random() < 0.05),
            "spammer": rng.random() < 0.5,
        }
        for annotator, yes in votes.items():
            records.append(
                make_record(
                    argument_id=f"x{i}", annotator_id=annotator, in_rating=2 if yes else 3, yes=["TE"] if yes else []
                )
            )

    model = mace_fit(records, MaceConfig(iterations=50, restarts=5, seed=1), dimensions=["TE"])
    theta = model.theta("TE")
    assert theta["spammer"] > max(theta["careful1"], theta["careful2"])
    assert theta["spammer"] > 0.5
    recovered = mace_labels(model).column("TE").astype(bool)
    assert (recovered == truth).mean() > 0.85


def test_objective_never_decreases_on_random_instances():
    rng = np.random.default_rng(5)
    fitted = 0
    for k in range(100):
        n_items = int(rng.integers(4, 20))
        n_annotators = int(rng.integers(2, 6))
        records = []
        for i in range(n_items):
            labelled = rng.random(n_annotators) < 0.7
            labelled[: 2 if i == 0 else 1] = True
            for j in np.flatnonzero(labelled):
                yes = bool(rng.random() < 0.4)
                records.append(
                    make_record(
                        argument_id=f"x{i}", annotator_id=f"a{j}", in_rating=2 if yes else 3, yes=["TE"] if yes else []
                    )
                )
        model = mace_fit(records, MaceConfig(iterations=15, restarts=2, seed=k), dimensions=["TE"])
        for trace in model.fits[DimensionId.TE].traces:
            fitted += bool(trace)
            assert all(b >= a - 1e-8 for a, b in zip(trace, trace[1:]))
    assert fitted > 150
