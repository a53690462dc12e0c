import pytest

from tclose_bridge.closeness import (
    check_k_anonymity,
    check_stochastic_t_closeness,
    check_t_closeness,
    check_t_closeness_per_attribute,
)
from tclose_bridge.exceptions import BadThreshold, NoConfidential, NonNumericColumn
from tclose_bridge.models import IDENTICAL, INFINITE, EquivalenceClass, StochasticMechanismSpec


def test_fixture_buckets_are_one_and_a_half_close(bands):
    report = check_t_closeness(bands, ["bucket"], 1.5)
    assert report.satisfied
    assert report.achieved_t.value == pytest.approx(1.5)
    assert [cid for cid, _ in report.per_class] == [1, 2, 3]


def test_fixture_fails_a_tighter_threshold(bands):
    report = check_t_closeness(bands, ["bucket"], 1.4)
    assert not report.satisfied
    assert report.achieved_t.value == pytest.approx(1.5)


def test_raw_salaries_are_infinitely_far(bands):
    assert check_t_closeness(bands, ["salary", "bucket"], 100.0).achieved_t == INFINITE


def test_per_attribute_reports(bands):
    salary, bucket = check_t_closeness_per_attribute(bands, ["salary", "bucket"], 1.5)
    assert salary.columns == ("salary",)
    assert salary.achieved_t == INFINITE
    assert bucket.achieved_t.value == pytest.approx(1.5)
    assert bucket.mode == "per_attribute"


def test_single_class_is_identical(bands):
    everyone = EquivalenceClass(class_id=1, record_indices=tuple(range(bands.N)), qi_signature=("*",))
    report = check_t_closeness(bands, ["salary"], 1.0, classes=[everyone])
    assert report.achieved_t == IDENTICAL
    assert report.satisfied


@pytest.mark.parametrize("t", [0.5, 0.0, float("nan")])
def test_threshold_below_one(bands, t):
    with pytest.raises(BadThreshold):
        check_t_closeness(bands, ["bucket"], t)


def test_confidential_columns_required(bands):
    with pytest.raises(NoConfidential):
        check_t_closeness(bands, [], 2.0)
    with pytest.raises(NoConfidential):
        check_t_closeness(bands, ["age_band"], 2.0)


def test_stochastic_single_class(make_table):
    data = make_table(
        {
            "q": ("quasi_identifier", "categorical", ["x"] * 5),
            "v": ("confidential", "numeric", [1, 4, 9, 16, 25]),
        }
    )
    report = check_stochastic_t_closeness(data, StochasticMechanismSpec(scale=2.0, column="v"), 1.0, grid_resolution=2001)
    assert report.achieved_t == IDENTICAL
    assert report.mode == "stochastic"


def test_stochastic_large_scale_approaches_one(bands):
    mech = StochasticMechanismSpec(scale=1e5, column="salary")
    report = check_stochastic_t_closeness(bands, mech, 1.01, grid_resolution=2001)
    assert report.satisfied
    assert report.achieved_t.value <= 1 + 2e-3


def test_stochastic_distance_shrinks_with_noise(bands):
    achieved = [
        check_stochastic_t_closeness(
            bands, StochasticMechanismSpec(scale=scale, column="salary"), 1.0, grid_resolution=4001, jobs=2
        ).achieved_t.value
        for scale in (5.0, 20.0, 80.0)
    ]
    assert achieved == sorted(achieved, reverse=True)
    assert achieved[-1] > 1.0


def test_stochastic_requires_numeric_confidential(bands):
    with pytest.raises(NonNumericColumn):
        check_stochastic_t_closeness(bands, StochasticMechanismSpec(scale=1.0, column="bucket"), 2.0)


def test_k_anonymity(bands):
    assert check_k_anonymity(bands, 4)
    assert not check_k_anonymity(bands, 5)


@pytest.mark.parametrize("scale", [0.05, 0.01, 0.001])
def test_vanishing_noise_matches_plain_closeness(make_table, scale):
    data = make_table(
        {
            "q": ("quasi_identifier", "categorical", ["x"] * 4 + ["y"] * 4),
            "v": ("confidential", "numeric", [1, 1, 2, 3, 1, 2, 2, 3]),
        }
    )
    plain = check_t_closeness(data, ["v"], 2.0)
    noisy = check_stochastic_t_closeness(data, StochasticMechanismSpec(scale=scale, column="v"), 2.0)
    assert [d.value for _, d in plain.per_class] == pytest.approx([1.5, 1.5])
    for (_, exact), (_, smoothed) in zip(plain.per_class, noisy.per_class):
        assert smoothed.value == pytest.approx(exact.value, rel=1e-6)
    assert noisy.satisfied


def test_tiny_noise_on_distinct_salaries_is_infinite(bands):
    report = check_stochastic_t_closeness(bands, StochasticMechanismSpec(scale=0.001, column="salary"), 100.0)
    assert report.achieved_t == INFINITE
    assert report.achieved_t == check_t_closeness(bands, ["salary"], 100.0).achieved_t
