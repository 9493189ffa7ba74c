import itertools

import pytest

from chaosmoments.partitions import (Partition, PartitionError, bell, enumerate_partitions,
                                     induced_partition, q_exponent, q_family)


@pytest.mark.parametrize("d, count", [(1, 1), (2, 2), (3, 5), (4, 15)])
def test_enumeration_counts(d, count):
    parts = enumerate_partitions(d)
    assert len(parts) == count == bell(d)
    assert len(set(parts)) == count
    assert all(J.covers(d) for J in parts)


def test_enumeration_range():
    for d in (0, 5):
        with pytest.raises(PartitionError):
            enumerate_partitions(d)


def test_d3_shapes():
    shapes = sorted(tuple(sorted(len(b) for b in J.blocks)) for J in enumerate_partitions(3))
    assert shapes == [(1, 1, 1), (1, 2), (1, 2), (1, 2), (3,)]


def test_canonical_form_and_text():
    assert Partition.of((3,), (2, 1)) == Partition.parse("12|3")
    assert str(Partition.of((3,), (2, 1))) == "12|3"
    assert Partition.parse("2|13").blocks == ((1, 3), (2,))
    for bad in ("", "1||2", "1|a", "12|2"):
        with pytest.raises(PartitionError):
            Partition.parse(bad)


def _q_by_scan(J):
    ground = J.ground
    out = set()
    for r in range(len(ground) + 1):
        for I in itertools.combinations(ground, r):
            comp = set(ground) - set(I)
            if all(len(comp & set(b)) <= 1 for b in J.blocks):
                out.add(I)
    return out


def test_q_family_examples():
    assert set(q_family(Partition.parse("1"))) == {(), (1,)}
    assert set(q_family(Partition.parse("12"))) == {(1, 2), (1,), (2,)}
    assert set(q_family(Partition.parse("12|3"))) == {(1, 2, 3), (1, 3), (2, 3), (1, 2), (1,), (2,)}


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_q_family_matches_scan(d):
    for J in enumerate_partitions(d):
        assert set(q_family(J)) == _q_by_scan(J)
    singletons = Partition(tuple((i,) for i in range(1, d + 1)))
    assert len(q_family(singletons)) == 2 ** d


def test_induced_partition():
    J = Partition.parse("12|3")
    assert induced_partition(J, (1, 2, 3)) == J
    assert induced_partition(J, (1, 3)) == Partition.parse("1|3")
    with pytest.raises(PartitionError):
        induced_partition(J, (3,))


def test_restriction_outside_q_family():
    J = Partition.parse("123")
    with pytest.raises(PartitionError):
        induced_partition(J, (2,))
    assert induced_partition(J, (2,), check=False) == Partition.parse("2")
    with pytest.raises(PartitionError):
        induced_partition(J, (4,), check=False)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_exponent_bounds(d):
    for J in enumerate_partitions(d):
        for I in q_family(J):
            n_out = d - len(I)
            S = induced_partition(J, I)
            assert n_out + S.k <= d
            assert q_exponent(J, I) >= 0.5
