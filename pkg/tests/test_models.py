import math

import pytest
from pydantic import ValidationError

from tclose_bridge.exceptions import CellViolation, EmptyDataset, SchemaMismatch
from tclose_bridge.models import (
    IDENTICAL,
    INFINITE,
    AttributeKind,
    AttributeRole,
    AttributeSchema,
    ClosenessReport,
    ExtendedDistance,
    Microdata,
    SyntheticSpec,
    VerificationReport,
    jsonable,
)


def numeric(name, role="confidential", bounds=None):
    return AttributeSchema(name=name, role=AttributeRole(role), kind=AttributeKind.NUMERIC, bounds=bounds)


def test_ordinal_requires_order():
    with pytest.raises(ValidationError):
        AttributeSchema(name="band", role="quasi_identifier", kind="ordinal")


def test_ordinal_order_must_not_repeat():
    with pytest.raises(ValidationError):
        AttributeSchema(name="band", role="quasi_identifier", kind="ordinal", order=("a", "b", "a"))


def test_bounds_only_on_numeric():
    with pytest.raises(ValidationError):
        AttributeSchema(name="city", role="quasi_identifier", kind="categorical", bounds=(0, 1))


def test_schema_width_and_rank():
    assert numeric("salary", bounds=(0, 150)).width == 150
    band = AttributeSchema(name="band", role="quasi_identifier", kind="ordinal", order=("low", "mid", "high"))
    assert band.rank("high") == 2
    assert band.sort_key("mid") < band.sort_key("high")


def test_microdata_rejects_duplicate_names():
    with pytest.raises(SchemaMismatch):
        Microdata(schema=(numeric("x"), numeric("x")), records=((1.0, 2.0),))


def test_microdata_rejects_out_of_bounds_cell():
    with pytest.raises(CellViolation) as excinfo:
        Microdata(schema=(numeric("x", bounds=(0, 10)),), records=((5.0,), (11.0,)))
    assert excinfo.value.row == 1
    assert excinfo.value.column == "x"


def test_microdata_rejects_unknown_ordinal_value():
    band = AttributeSchema(name="band", role="quasi_identifier", kind="ordinal", order=("low", "high"))
    with pytest.raises(CellViolation):
        Microdata(schema=(band,), records=(("medium",),))


def test_microdata_requires_records():
    with pytest.raises(EmptyDataset):
        Microdata(schema=(numeric("x"),), records=())


def test_replace_columns_swaps_and_appends():
    data = Microdata(schema=(numeric("x"), numeric("y")), records=((1.0, 2.0), (3.0, 4.0)))
    label = AttributeSchema(name="x", role="confidential", kind="categorical")
    extra = AttributeSchema(name="z", role="confidential", kind="categorical")
    out = data.replace_columns({"x": (label, ["a", "b"])}, appended=[(extra, ["p", "q"])])
    assert out.names == ("x", "y", "z")
    assert out.records == (("a", 2.0, "p"), ("b", 4.0, "q"))
    assert data.records == ((1.0, 2.0), (3.0, 4.0))


def test_extended_distance_ordering_and_json():
    assert INFINITE > ExtendedDistance.finite(1e300)
    assert IDENTICAL.to_json() == 1.0
    assert INFINITE.to_json() == "inf"
    assert not INFINITE.within(1e9)
    with pytest.raises(ValueError):
        ExtendedDistance(0.5)


def test_closeness_report_tolerates_rounding_at_the_threshold():
    report = ClosenessReport(target_t=1.5, per_class=((1, ExtendedDistance.finite(1.5000000000000002)),))
    assert report.satisfied
    assert not ClosenessReport(target_t=1.5, per_class=((1, ExtendedDistance.finite(1.5001)),)).satisfied


def test_closeness_report_infinite_is_never_satisfied():
    report = ClosenessReport(target_t=1e6, per_class=((1, IDENTICAL), (2, INFINITE)))
    assert report.achieved_t == INFINITE
    assert not report.satisfied
    assert report.to_dict()["achieved_t"] == "inf"


def test_verification_report_judge_and_timing():
    report = VerificationReport.judge("claim", trials=3, worst=1.01, bound=1.0, tolerance=0.02, runtime=0.5)
    assert report.passed
    assert report.margin == pytest.approx(-0.01)
    assert "runtime" not in report.to_dict()
    assert report.to_dict(with_timing=True)["runtime"] == 0.5
    assert not VerificationReport.judge("claim", trials=1, worst=1.03, bound=1.0, tolerance=0.02).passed


def test_jsonable_replaces_non_finite_values():
    assert jsonable({"a": [math.inf, INFINITE, 2.0]}) == {"a": ["inf", "inf", 2.0]}


def test_synthetic_spec_problems():
    assert SyntheticSpec(N=12, group_sizes=(4, 4, 4)).problems() == []
    assert SyntheticSpec(N=12, group_sizes=(4, 4)).problems()
    assert SyntheticSpec(N=4, group_sizes=(4,), value_range=(5.0, 5.0)).problems()
