from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from sofistat.catalog import DEFAULT_NAMES, describe, list_catalog, resolve, resolve_action, resolve_model, resolve_tower
from sofistat.config import CONFIG
from sofistat.errors import BudgetError, InputError
from sofistat.formats import write_action
from sofistat.partitions import BernoulliModel, FiniteModel, TowerLevelModel
from sofistat.sofic_towers import Tower, odometer_tower
from sofistat.words import FiniteAction, GroupWord, fix_ratio


def test_finite_names():
    c4 = resolve("C4")
    assert isinstance(c4, FiniteAction)
    assert fix_ratio(c4, GroupWord.generator(0).power(4)) == 1
    assert resolve("point").size == 1
    assert resolve(" trivial-3 ").size == 3
    assert isinstance(resolve_model("C4"), FiniteModel)
    assert resolve_action("C4").size == 4


def test_random_actions_are_seeded():
    first, again, other = resolve("random-2-6-0"), resolve("random-2-6-0"), resolve("random-2-6-1")
    assert first.generator_count == 2
    assert all(np.array_equal(g, h) for g, h in zip(first.gens, again.gens))
    assert not all(np.array_equal(g, h) for g, h in zip(first.gens, other.gens))


def test_tower_names():
    tower = resolve_tower("odometer-2-3")
    assert tower.sizes == [2, 4, 8]
    level = resolve("odometer-2-3@2")
    assert isinstance(level, TowerLevelModel)
    assert level.action.size == 4
    assert resolve_action("odometer-3-2@2").size == 9
    with pytest.raises(InputError):
        resolve("odometer-2-3@4")


def test_bernoulli_names():
    uniform = resolve("bernoulli-uniform-3:2")
    assert isinstance(uniform, BernoulliModel)
    assert uniform.probabilities == (Fraction(1, 3),) * 3
    assert uniform.generator_count == 2
    skewed = resolve("bernoulli-1/3,2/3")
    assert skewed.probabilities == (Fraction(1, 3), Fraction(2, 3))
    assert skewed.generator_count == 1
    with pytest.raises(InputError):
        resolve("bernoulli-1/2,1/3")


@pytest.mark.parametrize("name", ["nope", "C", "C0", "trivial-0", "random-0-4-1", "odometer-1-3"])
def test_unknown_or_invalid_names(name):
    with pytest.raises(InputError):
        resolve(name)


def test_kind_mismatches():
    with pytest.raises(InputError, match="tower"):
        resolve_model("odometer-2-3")
    with pytest.raises(InputError):
        resolve_action("bernoulli-uniform-2")
    with pytest.raises(InputError):
        resolve_tower("C4")


def test_carrier_limit(monkeypatch):
    monkeypatch.setattr(CONFIG, "max_carrier", 100)
    with pytest.raises(BudgetError):
        resolve("C200")
    with pytest.raises(BudgetError):
        resolve("odometer-2-7")


def test_json_files(tmp_path):
    path = write_action(tmp_path / "tower.json", odometer_tower(2, 3))
    tower = resolve(str(path))
    assert isinstance(tower, Tower)
    assert tower.sizes == [2, 4, 8]
    with pytest.raises(InputError):
        resolve(str(tmp_path / "missing.json"))


def test_catalog_listing():
    entries = list_catalog()
    assert [e.name for e in entries] == list(DEFAULT_NAMES)
    kinds = {e.name: e.kind for e in entries}
    assert kinds["odometer-2-6"] == "tower"
    assert kinds["odometer-2-6@3"] == "tower-level"
    assert kinds["bernoulli-uniform-2"] == "bernoulli"
    assert kinds["C4"] == "action"
    assert describe("odometer-2-6").sizes == [2, 4, 8, 16, 32, 64]
    assert describe("C4").row() == ["C4", "action", 1, "4", "finite(n=4)"]
    assert describe("bernoulli-uniform-2").row()[3] == ""
