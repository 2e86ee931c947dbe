from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from sofistat.config import CONFIG
from sofistat.distance import SearchStrategy, d_inf
from sofistat.errors import BudgetError, InputError
from sofistat.partitions import (
    IndexedPartition,
    TowerLevelModel,
    block_measures,
    generated_partition,
    singleton_partition,
    stats,
    stats_l1,
)
from sofistat.sofic_towers import (
    SoficApproximation,
    Tower,
    diagonal_product,
    factor_distance,
    odometer_tower,
    pullback_partition,
    random_sofic,
    tower_convergence,
    validate_sofic,
)
from sofistat.words import GroupWord, all_reduced_words, cyclic_action, fix_ratio, identity_action, parse_word
from tests.conftest import actions, random_partition, words

E = GroupWord.identity()
A = GroupWord.generator(0)
HALVES = IndexedPartition([0, 0, 1, 1], 2)


def test_odometer_levels_and_projection():
    tower = odometer_tower(2, 4)
    assert tower.sizes == [2, 4, 8, 16]
    assert tower.depth == 4
    assert tower.project(4, 2).tolist() == (np.arange(16) % 4).tolist()
    assert tower.project(3, 3).tolist() == list(range(8))
    assert tower.factor_map(2).tolist() == [0, 1, 0, 1]
    with pytest.raises(InputError):
        tower.project(2, 3)
    with pytest.raises(InputError):
        tower.factor_map(1)
    with pytest.raises(InputError):
        tower.level(5)


def test_odometer_fix_ratios():
    tower = odometer_tower(3, 3)
    assert tower.sizes == [3, 9, 27]
    assert [fix_ratio(level, A.power(9)) for level in tower.levels] == [1, 1, 0]
    assert [fix_ratio(level, A.power(2)) for level in tower.levels] == [0, 0, 0]


def test_odometer_respects_max_carrier(monkeypatch):
    monkeypatch.setattr(CONFIG, "max_carrier", 100)
    with pytest.raises(BudgetError):
        odometer_tower(2, 7)
    with pytest.raises(InputError):
        odometer_tower(1, 3)


def test_tower_rejects_bad_maps():
    c2, c4 = cyclic_action(2), cyclic_action(4)
    with pytest.raises(InputError, match="increase strictly"):
        Tower([c2, cyclic_action(2)], [[0, 1]])
    with pytest.raises(InputError, match="non-uniform"):
        Tower([c2, cyclic_action(3)], [[0, 1, 0]])
    with pytest.raises(InputError, match="non-uniform"):
        Tower([c2, c4], [[0, 0, 0, 1]])
    with pytest.raises(InputError, match="equivariant"):
        Tower([c2, c4], [[0, 0, 1, 1]])
    with pytest.raises(InputError):
        Tower([c2, c4], [])
    assert Tower([c2, c4], [[0, 1, 0, 1]]).sizes == [2, 4]


def test_pullback_partition():
    tower = odometer_tower(2, 3)
    pulled = pullback_partition(tower, 2, 3, HALVES)
    assert pulled.assignment.tolist() == [0, 0, 1, 1, 0, 0, 1, 1]
    assert pullback_partition(tower, 2, 2, HALVES) is HALVES
    with pytest.raises(InputError):
        pullback_partition(tower, 3, 2, HALVES)
    with pytest.raises(InputError):
        pullback_partition(tower, 1, 3, HALVES)


def test_tower_level_model_counts_on_the_level():
    tower = odometer_tower(2, 3)
    via_model = stats(TowerLevelModel(tower, 2), [E, A], HALVES)
    direct = stats(tower.level(2), [E, A], HALVES)
    assert stats_l1(via_model, direct) == 0
    with pytest.raises(InputError):
        TowerLevelModel(tower, 4)


@pytest.mark.parametrize("base,depth", [(2, 5), (3, 3)])
def test_tower_level_model_matches_the_level_action(base, depth):
    rng = np.random.default_rng(base * 10 + depth)
    tower = odometer_tower(base, depth)
    ws = [E, A, A.inverse(), parse_word("aaa")]
    for level in range(1, depth + 1):
        action = tower.level(level)
        model = TowerLevelModel(tower, level)
        for k in (1, 2, 3):
            p = random_partition(rng, action.size, k)
            assert stats(model, ws, p).key() == stats(action, ws, p).key()
            assert block_measures(model, p) == block_measures(action, p)
            assert generated_partition(model, [A], p) == generated_partition(action, [A], p)


def test_factor_distance_is_zero_down_the_tower():
    tower = odometer_tower(2, 8)
    probes = [E, A, A.inverse()]
    for n in range(1, 9):
        for m in range(1, n + 1):
            report = factor_distance(tower, m, n, probes, singleton_partition(tower.level(m).size))
            assert report.value == 0
            assert report.exact
            assert report.kind == "factor"


def test_exhaustive_search_agrees_with_the_pullback_on_a_small_tower():
    tower = odometer_tower(2, 3)
    alpha = IndexedPartition([0, 1, 0, 1], 2)
    exact = d_inf(tower.level(2), tower.level(3), [E, A], alpha, SearchStrategy.exhaustive())
    assert exact.value == 0
    assert factor_distance(tower, 2, 3, [E, A], alpha).value == 0


def test_random_sofic_is_reproducible():
    first = random_sofic(2, [5, 10, 20], seed=3)
    again = random_sofic(2, [5, 10, 20], seed=3)
    other = random_sofic(2, [5, 10, 20], seed=4)
    assert all(
        np.array_equal(g, h) for a, b in zip(first.actions, again.actions) for g, h in zip(a.gens, b.gens)
    )
    assert any(
        not np.array_equal(g, h) for a, b in zip(first.actions, other.actions) for g, h in zip(a.gens, b.gens)
    )
    assert len(first.probe_words) == 52
    assert first.kernel_words == ()
    with pytest.raises(InputError):
        random_sofic(2, [], seed=0)


def test_sofic_approximation_checks_generators():
    with pytest.raises(InputError):
        SoficApproximation((cyclic_action(2), identity_action(3, generator_count=2)))
    with pytest.raises(InputError):
        SoficApproximation((cyclic_action(2),), probe_words=(parse_word("b"),))
    sigma = SoficApproximation([cyclic_action(2)], [A.power(2)], [A])
    assert isinstance(sigma.actions, tuple)
    assert sigma.generator_count == 1


def test_diagonal_product_of_cycles():
    product = diagonal_product(cyclic_action(2), cyclic_action(3))
    assert product.size == 6
    assert [fix_ratio(product, A.power(k)) for k in (2, 3, 6)] == [0, 0, 1]
    with pytest.raises(InputError):
        diagonal_product(cyclic_action(2), identity_action(2, generator_count=2))


@settings(max_examples=40, deadline=None)
@given(actions(max_size=5, generators=2), actions(max_size=5, generators=2), words(generators=2, max_length=4))
def test_diagonal_product_multiplies_fix_ratios(a, b, w):
    assert fix_ratio(diagonal_product(a, b), w) == fix_ratio(a, w) * fix_ratio(b, w)


def test_odometer_validates_as_free():
    report = validate_sofic(SoficApproximation.from_tower(odometer_tower(2, 8)))
    assert report.passed
    assert report.free_at_depth
    assert report.freeness_label == "freeness at depth 8: yes"
    assert len(report.trajectories) == len(all_reduced_words(1, 3))
    assert report.rows()[0] == ["a", "probe", 0, 2, "0/1"]


def test_odometer_probe_window():
    # the window is the final third of the levels: sizes 8 and 16 at depth 4
    tower = odometer_tower(2, 4)
    window_sizes = (8, 16)
    for k in range(1, 41):
        report = validate_sofic(SoficApproximation.from_tower(tower, probe_words=[A.power(k)]))
        assert report.passed == all(k % s for s in window_sizes), k


def test_kernel_words_must_become_fixed():
    twos = SoficApproximation([cyclic_action(2)] * 3, kernel_words=[A.power(2)], probe_words=[A])
    assert validate_sofic(twos).passed
    failing = SoficApproximation.from_tower(odometer_tower(2, 6), kernel_words=[A], probe_words=[])
    report = validate_sofic(failing)
    assert not report.passed
    assert report.trajectories[0].role == "kernel"
    assert report.trajectories[0].window_value == 0


def test_identity_sequence_fails():
    frozen = SoficApproximation([identity_action(n) for n in (4, 8, 16)], probe_words=[A])
    report = validate_sofic(frozen)
    assert not report.passed
    assert report.freeness_label == "freeness at depth 3: no"


def test_pass_band_validation():
    sigma = SoficApproximation.from_tower(odometer_tower(2, 3))
    with pytest.raises(InputError):
        validate_sofic(sigma, lo=0.8, hi=0.2)
    half = SoficApproximation([cyclic_action(2), identity_action(2)], probe_words=[A])
    assert validate_sofic(half, lo=1.0, hi=1.0).passed
    assert not validate_sofic(half).passed
    assert not validate_sofic(half).free_at_depth


def test_tower_convergence_on_a_short_odometer():
    tower = odometer_tower(2, 4)
    outer = SearchStrategy.local(restarts=2, max_moves=10, seed=0)
    report = tower_convergence(tower, [A, A.inverse()], 2, outer, inner=SearchStrategy.exhaustive())
    assert report.sizes == [2, 4, 8, 16]
    assert report.words == ["1", "a", "A"]
    assert all(report.value(m, m) == 0 for m in range(1, 5))
    assert len(report.cells) == 10
    assert all(cell.value == 0 and cell.exact for cell in report.factor_cells)
    assert report.trend is not None and report.trend <= 0
    assert report.fix_trajectories["a"] == [Fraction(0)] * 4
    assert set(report.row_monotone) == {1, 2, 3}
    assert len(report.rows()) == 20
