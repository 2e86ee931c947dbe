from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sofistat.config import CONFIG
from sofistat.errors import InputError, UnsupportedPartitionError
from sofistat.partitions import (
    BernoulliModel,
    CylinderPartition,
    IndexedPartition,
    block_measures,
    coarsening_map,
    compress,
    coordinate_partition,
    generated_partition,
    join,
    nonempty_block_measures,
    refines,
    shannon_entropy,
    singleton_partition,
    stats,
    stats_l1,
    translate,
    trivial_partition,
)
from sofistat.words import FiniteAction, GroupWord, cyclic_action, parse_word
from tests.conftest import actions, partitions, words

E = GroupWord.identity()
A = GroupWord.generator(0)
HALVES = IndexedPartition([0, 0, 1, 1], 2)


def test_indexed_partition_validation():
    with pytest.raises(InputError):
        IndexedPartition([0, 3], 2)
    with pytest.raises(InputError):
        IndexedPartition([])
    with pytest.raises(InputError):
        IndexedPartition.from_blocks([[0, 1], [1]], 2)
    p = IndexedPartition.from_blocks([[2], [], [0, 1]], 3)
    assert p.assignment.tolist() == [2, 2, 0]
    assert p.blocks() == [[2], [], [0, 1]]


def test_translate_moves_blocks_by_the_word():
    moved = translate(cyclic_action(4), A, HALVES)
    assert moved.assignment.tolist() == [1, 0, 0, 1]
    assert moved.blocks() == [[1, 2], [0, 3]]
    assert translate(cyclic_action(4), E, HALVES) is HALVES


def test_join_is_row_major():
    joined = join(HALVES, IndexedPartition([0, 1, 0, 1], 2))
    assert joined.assignment.tolist() == [0, 1, 2, 3]
    assert joined.block_count == 4
    with pytest.raises(InputError):
        join(HALVES, trivial_partition(3))


def test_generated_partition_lists_translate_indices():
    generated = generated_partition(cyclic_action(4), [E, A], HALVES)
    assert generated.assignment.tolist() == [1, 0, 2, 3]
    assert generated.block_count == 4


def test_stats_of_halves_on_c4():
    s = stats(cyclic_action(4), [E, A], HALVES)
    assert s.denominator == 4
    assert s.entry(0, 0, E) == Fraction(1, 2)
    assert s.entry(0, 1, E) == 0
    assert all(s.entry(i, j, A) == Fraction(1, 4) for i in range(2) for j in range(2))
    assert sum(s.entries.values()) == 2


def test_refinement_helpers():
    singles = singleton_partition(4)
    assert refines(singles, HALVES)
    assert not refines(trivial_partition(4), HALVES)
    assert coarsening_map(singles, HALVES) == (0, 0, 1, 1)
    assert coarsening_map(IndexedPartition([0, 0, 1, 1], 3), trivial_partition(4)) == (0, 0, None)
    with pytest.raises(InputError):
        coarsening_map(HALVES, IndexedPartition([0, 1, 1, 1], 2))


def test_compress_drops_empty_blocks():
    compressed, kept = compress(IndexedPartition([0, 2, 2], 3))
    assert compressed.assignment.tolist() == [0, 1, 1]
    assert kept == (0, 2)


def test_block_measures_and_entropy():
    assert block_measures(cyclic_action(4), IndexedPartition([0, 0, 0, 1], 3)) == (
        Fraction(3, 4),
        Fraction(1, 4),
        Fraction(0),
    )
    assert shannon_entropy(cyclic_action(4), HALVES) == pytest.approx(math.log(2))
    assert shannon_entropy(cyclic_action(4), trivial_partition(4)) == 0


def test_cylinder_join_and_measures():
    bern = BernoulliModel(["1/3", "2/3"])
    joined = join(coordinate_partition(2), coordinate_partition(2, A))
    assert isinstance(joined, CylinderPartition)
    assert joined.coords == (E, A)
    assert joined.table == (0, 1, 2, 3)
    assert block_measures(bern, joined) == (
        Fraction(1, 9),
        Fraction(2, 9),
        Fraction(2, 9),
        Fraction(4, 9),
    )


def test_bernoulli_stats_are_products():
    bern = BernoulliModel(["1/2", "1/2"])
    s = stats(bern, [E, A, parse_word("aa")], coordinate_partition(2))
    assert s.entry(0, 0, E) == Fraction(1, 2)
    assert s.entry(1, 0, E) == 0
    for w in (A, parse_word("aa")):
        assert all(s.entry(i, j, w) == Fraction(1, 4) for i in range(2) for j in range(2))


def test_bernoulli_rejects_indexed_partitions():
    bern = BernoulliModel(["1/2", "1/2"])
    with pytest.raises(UnsupportedPartitionError):
        stats(bern, [E], HALVES)
    with pytest.raises(InputError):
        BernoulliModel(["1/2", "1/3"])
    with pytest.raises(InputError):
        stats(bern, [parse_word("b")], coordinate_partition(2))


def test_stats_reject_foreign_partitions():
    with pytest.raises(InputError):
        stats(cyclic_action(3), [E], HALVES)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_stats_rows_sum_to_block_measures(data):
    action = data.draw(actions(max_size=7))
    p = data.draw(partitions(action.size))
    s = stats(action, [E, A, A.inverse()], p)
    measures = block_measures(action, p)
    for t in range(3):
        rows = s.counts[t].sum(axis=1)
        assert [Fraction(int(r), s.denominator) for r in rows] == list(measures)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_l1_is_a_metric_on_stats(data):
    action = data.draw(actions(max_size=6))
    p, q = data.draw(partitions(action.size, 2)), data.draw(partitions(action.size, 2))
    p = IndexedPartition(p.assignment, 2)
    q = IndexedPartition(q.assignment, 2)
    sp, sq = stats(action, [E, A], p), stats(action, [E, A], q)
    assert stats_l1(sp, sp) == 0
    assert stats_l1(sp, sq) == stats_l1(sq, sp)


def test_stats_counts_are_read_only():
    s = stats(cyclic_action(4), [E], HALVES)
    with pytest.raises(ValueError):
        s.counts[0, 0, 0] = 9
    assert np.array_equal(s.counts[0], [[2, 0], [0, 2]])


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_stats_swap_blocks_under_the_inverse_word(data):
    action = data.draw(actions(max_size=7, generators=2))
    p = data.draw(partitions(action.size))
    w = data.draw(words(generators=2))
    s = stats(action, [w, w.inverse()], p)
    for i in range(p.block_count):
        for j in range(p.block_count):
            assert s.entry(i, j, w) == s.entry(j, i, w.inverse())


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_identity_slice_is_diagonal(data):
    action = data.draw(actions(max_size=7))
    p = data.draw(partitions(action.size))
    s = stats(action, [E], p)
    measures = block_measures(action, p)
    for i in range(p.block_count):
        for j in range(p.block_count):
            assert s.entry(i, j, E) == (measures[i] if i == j else 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.data())
def test_stats_survive_rotating_a_cycle(n, data):
    p = data.draw(partitions(n))
    shift = data.draw(st.integers(0, n - 1))
    rotated = IndexedPartition(np.roll(p.assignment, shift), p.block_count)
    ws = [E, A, A.inverse(), parse_word("aa")]
    assert stats(cyclic_action(n), ws, rotated).key() == stats(cyclic_action(n), ws, p).key()


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_join_never_lowers_entropy(data):
    action = data.draw(actions(max_size=8))
    p, q = data.draw(partitions(action.size)), data.draw(partitions(action.size))
    joined = shannon_entropy(action, join(p, q))
    assert joined >= shannon_entropy(action, p) - 1e-12
    assert joined >= shannon_entropy(action, q) - 1e-12


def _bit_rotation(m: int) -> tuple[FiniteAction, np.ndarray]:
    # all binary words of length m, rotated one place; bits[x, k] is letter k of x
    points = np.arange(2**m)
    bits = (points[:, None] >> np.arange(m)) & 1
    image = (np.roll(bits, 1, axis=1) << np.arange(m)).sum(axis=1)
    return FiniteAction([image], size=2**m), bits


@pytest.mark.parametrize("table", [[0, 1, 2, 3], [0, 1, 1, 0], [0, 0, 0, 1]])
def test_uniform_bernoulli_stats_match_a_rotation_of_binary_words(table):
    cylinder = CylinderPartition((E, A), 2, table)
    action, bits = _bit_rotation(5)
    finite = IndexedPartition(np.asarray(table)[bits[:, 0] * 2 + bits[:, 1]], cylinder.block_count)
    ws = [E, A, A.inverse(), parse_word("aa")]
    exact = stats(BernoulliModel(["1/2", "1/2"]), ws, cylinder)
    approx = stats(action, ws, finite)
    assert exact.entries == approx.entries
    assert stats_l1(exact, approx) == 0


def test_join_refuses_oversized_products(monkeypatch):
    monkeypatch.setattr(CONFIG, "max_join_blocks", 8)
    assert join(HALVES, IndexedPartition([0, 1, 2, 3], 4)).block_count == 8
    with pytest.raises(InputError):
        join(HALVES, IndexedPartition([0, 1, 2, 3], 5))
    with pytest.raises(InputError):
        join(coordinate_partition(3), coordinate_partition(3, A))


def test_nonempty_block_measures_skip_empty_blocks():
    p = IndexedPartition([0, 0, 0, 2], 4)
    assert nonempty_block_measures(cyclic_action(4), p) == {0: Fraction(3, 4), 2: Fraction(1, 4)}
    unused = CylinderPartition((E,), 2, [0, 0], 2)
    assert nonempty_block_measures(BernoulliModel(["1/3", "2/3"]), unused) == {0: Fraction(1)}
