import pytest

from tclose_bridge.exceptions import KTooLarge
from tclose_bridge.microaggregation import kanon_microaggregate


def line_table(make_table, n):
    return make_table(
        {
            "x": ("quasi_identifier", "numeric", list(range(1, n + 1))),
            "v": ("confidential", "numeric", [0] * n),
        }
    )


def test_line_of_twelve(make_table):
    partition = kanon_microaggregate(line_table(make_table, 12), 4)
    assert [cls.record_indices for cls in partition.classes] == [(0, 1, 2, 3), (4, 5, 6, 7), (8, 9, 10, 11)]
    assert [cls.class_id for cls in partition.classes] == [1, 2, 3]


@pytest.mark.parametrize("n, k", [(12, 3), (13, 4), (20, 3), (7, 2), (30, 7)])
def test_sizes_between_k_and_twice_k(make_table, n, k):
    partition = kanon_microaggregate(line_table(make_table, n), k)
    assert sorted(i for cls in partition.classes for i in cls.record_indices) == list(range(n))
    assert all(k <= size <= 2 * k - 1 for size in partition.e_sizes)


def test_extreme_k(make_table):
    data = line_table(make_table, 6)
    assert kanon_microaggregate(data, 6).e_sizes == (6,)
    assert kanon_microaggregate(data, 1).e_sizes == (1,) * 6


@pytest.mark.parametrize("k", [0, 7])
def test_k_out_of_range(make_table, k):
    with pytest.raises(KTooLarge):
        kanon_microaggregate(line_table(make_table, 6), k)


def test_categorical_blocks_stay_apart(make_table):
    data = make_table(
        {
            "city": ("quasi_identifier", "categorical", ["a"] * 4 + ["b"] * 4),
            "age": ("quasi_identifier", "numeric", [1, 50, 2, 51, 1, 50, 2, 51]),
            "v": ("confidential", "numeric", [0] * 8),
        }
    )
    partition = kanon_microaggregate(data, 4)
    assert [cls.record_indices for cls in partition.classes] == [(0, 1, 2, 3), (4, 5, 6, 7)]


def test_small_blocks_are_pooled(make_table):
    data = make_table(
        {
            "city": ("quasi_identifier", "categorical", ["a"] * 4 + ["b", "c", "c"]),
            "v": ("confidential", "numeric", [0] * 7),
        }
    )
    partition = kanon_microaggregate(data, 3)
    assert [cls.record_indices for cls in partition.classes] == [(0, 1, 2, 3), (4, 5, 6)]


def test_undersized_pool_joins_nearest_class(make_table):
    data = make_table(
        {
            "city": ("quasi_identifier", "categorical", ["a"] * 5 + ["b"] * 2),
            "age": ("quasi_identifier", "numeric", [20, 21, 22, 23, 24, 22, 22]),
            "v": ("confidential", "numeric", [0] * 7),
        }
    )
    partition = kanon_microaggregate(data, 3)
    assert partition.e_sizes == (7,)
