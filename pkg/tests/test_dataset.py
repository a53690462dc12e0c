import numpy as np
import pytest

from tclose_bridge.dataset import equivalence_classes, load_dataset, qi_matrix, save_dataset
from tclose_bridge.exceptions import CellViolation, EmptyDataset, SchemaMismatch


def test_load_fixture(bands):
    assert bands.N == 12
    assert bands.names == ("age_band", "salary", "bucket")
    assert bands.records[0] == ("20-29", 11.0, "B1")
    assert isinstance(bands.records[0][1], float)


def test_header_must_match(tmp_path, bands_schema):
    path = tmp_path / "swapped.csv"
    path.write_text("salary,age_band,bucket\n11,20-29,B1\n")
    with pytest.raises(SchemaMismatch):
        load_dataset(path, bands_schema)


def test_cell_outside_bounds(tmp_path, bands_schema):
    path = tmp_path / "bounds.csv"
    path.write_text("age_band,salary,bucket\n20-29,11,B1\n20-29,200,B1\n")
    with pytest.raises(CellViolation) as excinfo:
        load_dataset(path, bands_schema)
    assert excinfo.value.row == 1
    assert excinfo.value.column == "salary"


@pytest.mark.parametrize("row", ["20-29,,B1", "20-29,abc,B1", "60-69,11,B1"])
def test_bad_cells(tmp_path, bands_schema, row):
    path = tmp_path / "bad.csv"
    path.write_text(f"age_band,salary,bucket\n{row}\n")
    with pytest.raises(CellViolation):
        load_dataset(path, bands_schema)


def test_header_only(tmp_path, bands_schema):
    path = tmp_path / "empty.csv"
    path.write_text("age_band,salary,bucket\n")
    with pytest.raises(EmptyDataset):
        load_dataset(path, bands_schema)


def test_save_then_load_is_cell_identical(tmp_path, make_table):
    data = make_table(
        {
            "city": ("quasi_identifier", "categorical", ["Reus", "Tarragona, Spain", 'say "hi"']),
            "income": ("confidential", "numeric", [0.1 + 0.2, 1e-17, 12345.678901234567]),
        }
    )
    path = save_dataset(data, tmp_path / "out.csv")
    assert load_dataset(path, data.schema).records == data.records
    assert not list(tmp_path.glob(".*.tmp"))


def test_fixture_classes(bands):
    classes = equivalence_classes(bands)
    assert [eq.class_id for eq in classes] == [1, 2, 3]
    assert [eq.size for eq in classes] == [4, 4, 4]
    assert classes[0].qi_signature == ("20-29",)
    assert classes[2].record_indices == (8, 9, 10, 11)


def test_classes_partition_the_rows(make_table):
    data = make_table(
        {
            "zip": ("quasi_identifier", "categorical", ["b", "a", "b", "c", "a", "b"]),
            "v": ("confidential", "numeric", [1, 2, 3, 4, 5, 6]),
        }
    )
    classes = equivalence_classes(data)
    assert [eq.qi_signature for eq in classes] == [("a",), ("b",), ("c",)]
    assert sorted(i for eq in classes for i in eq.record_indices) == list(range(6))


def test_single_and_singleton_classes(make_table):
    same = make_table({"q": ("quasi_identifier", "numeric", [1, 1, 1]), "v": ("confidential", "numeric", [1, 2, 3])})
    assert [eq.size for eq in equivalence_classes(same)] == [3]
    distinct = make_table({"q": ("quasi_identifier", "numeric", [3, 1, 2]), "v": ("confidential", "numeric", [1, 2, 3])})
    assert [eq.record_indices for eq in equivalence_classes(distinct)] == [(1,), (2,), (0,)]


def test_qi_matrix_is_standardized(bands, make_table):
    features = qi_matrix(bands)
    assert features.shape == (12, 1)
    assert features.mean() == pytest.approx(0.0, abs=1e-12)
    assert features.std() == pytest.approx(1.0)

    mixed = make_table(
        {
            "city": ("quasi_identifier", "categorical", ["a", "b", "a", "c"]),
            "age": ("quasi_identifier", "numeric", [30, 30, 30, 30]),
            "v": ("confidential", "numeric", [1, 2, 3, 4]),
        }
    )
    features = qi_matrix(mixed)
    assert features.shape == (4, 4)
    assert np.all(features[:, 3] == 0.0)
