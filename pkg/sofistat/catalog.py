"""
Named actions, towers and Bernoulli models.

    C<n>                        cyclic shift on n points
    trivial-<n>                 identity action on n points
    point                       one-point action
    random-<r>-<n>-<seed>       r uniform random permutations of n points
    odometer-<b>-<d>            base-b odometer tower of depth d
    odometer-<b>-<d>@<L>        level L of that tower
    bernoulli-uniform-<A>[:r]   uniform Bernoulli shift over A symbols
    bernoulli-<p1>,<p2>,..[:r]  Bernoulli shift with the given base probabilities
    <path>.json                 action or tower file
"""

from __future__ import annotations

import re
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from sofistat.config import CONFIG
from sofistat.errors import BudgetError, InputError
from sofistat.formats import read_action
from sofistat.partitions import BernoulliModel, FiniteModel, MeasureModel, TowerLevelModel
from sofistat.protocol import parse_fraction
from sofistat.sofic_towers import Tower, odometer_tower
from sofistat.words import FiniteAction, cyclic_action, identity_action

Resolved = Union[FiniteAction, Tower, TowerLevelModel, BernoulliModel]

DEFAULT_NAMES = (
    "point",
    "C2",
    "C4",
    "trivial-2",
    "random-2-6-0",
    "odometer-2-6",
    "odometer-2-6@3",
    "bernoulli-uniform-2",
)

_CYCLIC = re.compile(r"^C(\d+)$")
_TRIVIAL = re.compile(r"^trivial-(\d+)$")
_RANDOM = re.compile(r"^random-(\d+)-(\d+)-(\d+)$")
_ODOMETER = re.compile(r"^odometer-(\d+)-(\d+)(?:@(\d+))?$")
_BERNOULLI_UNIFORM = re.compile(r"^bernoulli-uniform-(\d+)(?::(\d+))?$")
_BERNOULLI = re.compile(r"^bernoulli-([0-9/,.]+)(?::(\d+))?$")


def _carrier(n: int) -> int:
    if n < 1:
        raise InputError(f"carrier size must be positive, got {n}")
    if n > CONFIG.max_carrier:
        raise BudgetError(f"carrier {n} exceeds max_carrier {CONFIG.max_carrier}")
    return n


def random_action(generator_count: int, size: int, seed: int) -> FiniteAction:
    if generator_count < 1:
        raise InputError("a random action needs at least one generator")
    rng = np.random.default_rng(seed)
    return FiniteAction([rng.permutation(_carrier(size)) for _ in range(generator_count)], size=size)


def resolve(name: str) -> Resolved:
    name = name.strip()
    if name.endswith(".json"):
        return read_action(Path(name))
    if name == "point":
        return identity_action(1)
    if m := _CYCLIC.match(name):
        return cyclic_action(_carrier(int(m[1])))
    if m := _TRIVIAL.match(name):
        return identity_action(_carrier(int(m[1])))
    if m := _RANDOM.match(name):
        return random_action(int(m[1]), int(m[2]), int(m[3]))
    if m := _ODOMETER.match(name):
        tower = odometer_tower(int(m[1]), int(m[2]))
        return tower if m[3] is None else TowerLevelModel(tower, int(m[3]))
    if m := _BERNOULLI_UNIFORM.match(name):
        alphabet = int(m[1])
        if alphabet < 1:
            raise InputError("Bernoulli alphabet must be nonempty")
        return BernoulliModel([Fraction(1, alphabet)] * alphabet, int(m[2] or 1))
    if m := _BERNOULLI.match(name):
        return BernoulliModel([parse_fraction(p) for p in m[1].split(",") if p], int(m[2] or 1))
    raise InputError(f"unknown catalog name {name!r}")


def resolve_model(name: str) -> MeasureModel:
    obj = resolve(name)
    if isinstance(obj, Tower):
        raise InputError(f"{name!r} is a tower; pick a level with @<L>")
    if isinstance(obj, FiniteAction):
        return FiniteModel(obj)
    return obj


def resolve_action(name: str) -> FiniteAction:
    model = resolve_model(name)
    if isinstance(model, BernoulliModel):
        raise InputError(f"{name!r} is not a finite action")
    return model.action


def resolve_tower(name: str) -> Tower:
    obj = resolve(name)
    if not isinstance(obj, Tower):
        raise InputError(f"{name!r} is not a tower")
    return obj


class CatalogEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: str
    generators: int
    sizes: list[int]
    description: str

    def row(self) -> list:
        return [self.name, self.kind, self.generators, " ".join(str(s) for s in self.sizes), self.description]


def describe(name: str) -> CatalogEntry:
    obj = resolve(name)
    if isinstance(obj, Tower):
        return CatalogEntry(
            name=name, kind="tower", generators=obj.generator_count, sizes=obj.sizes, description=repr(obj)
        )
    if isinstance(obj, FiniteAction):
        model = FiniteModel(obj)
        return CatalogEntry(
            name=name, kind="action", generators=obj.generator_count, sizes=[obj.size], description=model.describe()
        )
    if isinstance(obj, TowerLevelModel):
        return CatalogEntry(
            name=name,
            kind="tower-level",
            generators=obj.generator_count,
            sizes=[obj.action.size],
            description=obj.describe(),
        )
    return CatalogEntry(name=name, kind="bernoulli", generators=obj.generator_count, sizes=[], description=obj.describe())


def list_catalog(names: tuple[str, ...] | list[str] = DEFAULT_NAMES) -> list[CatalogEntry]:
    return [describe(name) for name in names]
