"""
Towers of finite quotient actions, sofic approximations and their validation.

A tower lists finite actions of strictly increasing size together with
equivariant, uniformly fibered factor maps from each level onto the previous
one. Levels are numbered from 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_serializer
from tabulate import tabulate

from sofistat.config import CONFIG
from sofistat.distance import DistanceReport, SearchStrategy, d_sym
from sofistat.errors import BudgetError, InputError
from sofistat.parallel import ordered_map
from sofistat.partitions import IndexedPartition, Partition, singleton_partition, stats, stats_l1
from sofistat.protocol import fraction_text
from sofistat.words import (
    FiniteAction,
    GroupWord,
    all_reduced_words,
    cyclic_action,
    fix_ratio,
    format_word,
    normalize_words,
)


# ────────────────────── Towers ──────────────────────


class Tower:
    __slots__ = ("levels", "maps")

    def __init__(self, levels: Sequence[FiniteAction], maps: Sequence[Sequence[int] | np.ndarray]) -> None:
        levels = tuple(levels)
        if not levels:
            raise InputError("a tower needs at least one level")
        if len(maps) != len(levels) - 1:
            raise InputError(f"{len(levels)} levels need {len(levels) - 1} factor maps, got {len(maps)}")
        generators = levels[0].generator_count
        arrays = []
        for index, (coarse, fine, raw) in enumerate(zip(levels, levels[1:], maps), start=1):
            if fine.generator_count != generators:
                raise InputError(f"level {index + 1} has {fine.generator_count} generators, expected {generators}")
            if fine.size <= coarse.size:
                raise InputError(f"level sizes must increase strictly: {coarse.size} then {fine.size}")
            arr = np.array(raw, dtype=np.int64)
            if arr.shape != (fine.size,) or arr.min() < 0 or arr.max() >= coarse.size:
                raise InputError(f"factor map {index + 1}->{index} is not a map onto level {index}")
            fibers = np.bincount(arr, minlength=coarse.size)
            if fine.size % coarse.size or (fibers != fine.size // coarse.size).any():
                raise InputError(f"factor map {index + 1}->{index} has non-uniform fibers")
            for g in range(generators):
                if not np.array_equal(arr[fine.gens[g]], coarse.gens[g][arr]):
                    raise InputError(f"factor map {index + 1}->{index} is not equivariant for generator {g}")
            arr.flags.writeable = False
            arrays.append(arr)
        self.levels: tuple[FiniteAction, ...] = levels
        self.maps: tuple[np.ndarray, ...] = tuple(arrays)

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def generator_count(self) -> int:
        return self.levels[0].generator_count

    @property
    def sizes(self) -> list[int]:
        return [level.size for level in self.levels]

    def _check_level(self, level: int) -> None:
        if not 1 <= level <= self.depth:
            raise InputError(f"level {level} outside 1..{self.depth}")

    def level(self, level: int) -> FiniteAction:
        self._check_level(level)
        return self.levels[level - 1]

    def factor_map(self, level: int) -> np.ndarray:
        """Map from level ``level`` onto level ``level - 1``."""
        self._check_level(level)
        if level == 1:
            raise InputError("level 1 has no factor map below it")
        return self.maps[level - 2]

    def project(self, from_level: int, to_level: int) -> np.ndarray:
        """Composite factor map from ``from_level`` down to ``to_level``."""
        self._check_level(from_level)
        self._check_level(to_level)
        if to_level > from_level:
            raise InputError(f"cannot project upward from level {from_level} to {to_level}")
        out = np.arange(self.level(from_level).size, dtype=np.int64)
        for level in range(from_level, to_level, -1):
            out = self.factor_map(level)[out]
        return out

    def __repr__(self) -> str:
        return f"Tower(sizes={self.sizes})"


def odometer_tower(base: int, depth: int) -> Tower:
    """Cyclic actions on base^L points, L = 1..depth, with reduction maps."""
    if base < 2:
        raise InputError(f"odometer base must be >= 2, got {base}")
    if depth < 1:
        raise InputError(f"odometer depth must be >= 1, got {depth}")
    if base**depth > CONFIG.max_carrier:
        raise BudgetError(f"odometer top level {base}^{depth} exceeds max_carrier {CONFIG.max_carrier}")
    sizes = [base**level for level in range(1, depth + 1)]
    levels = [cyclic_action(size) for size in sizes]
    maps = [np.arange(fine, dtype=np.int64) % coarse for coarse, fine in zip(sizes, sizes[1:])]
    return Tower(levels, maps)


def pullback_partition(tower: Tower, from_level: int, to_level: int, p: IndexedPartition) -> IndexedPartition:
    """Partition of the ``to_level`` carrier by the block of each point's image at ``from_level``."""
    if from_level > to_level:
        raise InputError(f"pullback goes upward: from_level {from_level} > to_level {to_level}")
    if p.carrier_size != tower.level(from_level).size:
        raise InputError(f"partition covers {p.carrier_size} points, level {from_level} has {tower.level(from_level).size}")
    if from_level == to_level:
        return p
    return IndexedPartition(p.assignment[tower.project(to_level, from_level)], p.block_count)


def diagonal_product(a: FiniteAction, b: FiniteAction) -> FiniteAction:
    """Coordinatewise action on pairs; (x, y) has index x * |b| + y."""
    if a.generator_count != b.generator_count:
        raise InputError(f"generator counts differ: {a.generator_count} vs {b.generator_count}")
    gens = [(ga[:, None] * b.size + gb[None, :]).ravel() for ga, gb in zip(a.gens, b.gens)]
    return FiniteAction(gens, size=a.size * b.size)


# ────────────────────── Sofic approximations ────────


@dataclass(frozen=True)
class SoficApproximation:
    actions: tuple[FiniteAction, ...]
    kernel_words: tuple[GroupWord, ...] = ()
    probe_words: tuple[GroupWord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for name in ("actions", "kernel_words", "probe_words"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.actions:
            raise InputError("a sofic approximation needs at least one action")
        counts = {a.generator_count for a in self.actions}
        if len(counts) != 1:
            raise InputError(f"actions disagree on the generator count: {sorted(counts)}")
        r = counts.pop()
        for w in self.kernel_words + self.probe_words:
            if w.max_generator >= r:
                raise InputError(f"word {format_word(w)} uses a generator the actions do not have")

    @property
    def generator_count(self) -> int:
        return self.actions[0].generator_count

    @classmethod
    def from_tower(
        cls,
        tower: Tower,
        kernel_words: Sequence[GroupWord] = (),
        probe_words: Sequence[GroupWord] | None = None,
    ) -> "SoficApproximation":
        probes = tuple(probe_words) if probe_words is not None else tuple(all_reduced_words(tower.generator_count, 3))
        return cls(tower.levels, tuple(kernel_words), probes)


def random_sofic(
    generator_count: int,
    sizes: Sequence[int],
    seed: int,
    probe_words: Sequence[GroupWord] | None = None,
) -> SoficApproximation:
    """Independent uniform permutations per generator and level; empty kernel."""
    if not sizes:
        raise InputError("random_sofic needs at least one size")
    if generator_count < 1:
        raise InputError("random_sofic needs at least one generator")
    if max(sizes) > CONFIG.max_carrier:
        raise BudgetError(f"size {max(sizes)} exceeds max_carrier {CONFIG.max_carrier}")
    rng = np.random.default_rng(seed)
    actions = tuple(
        FiniteAction([rng.permutation(n) for _ in range(generator_count)], size=n) for n in sizes
    )
    probes = tuple(probe_words) if probe_words is not None else tuple(all_reduced_words(generator_count, 3))
    return SoficApproximation(actions, (), probes)


# ────────────────────── Validation ──────────────────


class WordTrajectory(BaseModel):
    model_config = ConfigDict(frozen=True)

    word: str
    role: Literal["kernel", "probe"]
    ratios: list[Fraction]
    window_value: Fraction
    passed: bool

    @field_serializer("ratios")
    def _ser_ratios(self, values: list[Fraction]) -> list[str]:
        return [fraction_text(v) for v in values]

    @field_serializer("window_value")
    def _ser_window(self, value: Fraction) -> str:
        return fraction_text(value)


class SoficValidationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sizes: list[int]
    lo: float
    hi: float
    trajectories: list[WordTrajectory]
    passed: bool
    free_at_depth: bool
    freeness_label: str

    def rows(self) -> list[list]:
        """Long-format rows: word, role, stage, n, fix ratio."""
        return [
            [t.word, t.role, stage, n, fraction_text(r)]
            for t in self.trajectories
            for stage, (n, r) in enumerate(zip(self.sizes, t.ratios))
        ]


def _final_third(values: Sequence[Fraction]) -> list[Fraction]:
    return list(values[-math.ceil(len(values) / 3):])


def validate_sofic(
    sigma: SoficApproximation,
    lo: float | None = None,
    hi: float | None = None,
) -> SoficValidationReport:
    """Kernel words must reach fix ratio >= hi and probe words <= lo over the final third."""
    lo = CONFIG.pass_band_lo if lo is None else lo
    hi = CONFIG.pass_band_hi if hi is None else hi
    if not 0 <= lo <= hi <= 1:
        raise InputError(f"pass band must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")

    trajectories = []
    for role, words in (("kernel", sigma.kernel_words), ("probe", sigma.probe_words)):
        for w in words:
            ratios = [fix_ratio(action, w) for action in sigma.actions]
            window = _final_third(ratios)
            if role == "kernel":
                value = min(window)
                passed = value >= Fraction(str(hi))
            else:
                value = max(window)
                passed = value <= Fraction(str(lo))
            trajectories.append(
                WordTrajectory(word=format_word(w), role=role, ratios=ratios, window_value=value, passed=passed)
            )

    depth = len(sigma.actions)
    free = all(t.ratios[-1] == 0 for t in trajectories if t.role == "probe")
    report = SoficValidationReport(
        sizes=[a.size for a in sigma.actions],
        lo=lo,
        hi=hi,
        trajectories=trajectories,
        passed=all(t.passed for t in trajectories),
        free_at_depth=free,
        freeness_label=f"freeness at depth {depth}: {'yes' if free else 'no'}",
    )

    table = tabulate(
        [[t.word, t.role, float(t.window_value), "PASS" if t.passed else "FAIL"] for t in trajectories],
        headers=["word", "role", "window", "result"],
        tablefmt="github",
    )
    logger.info(
        f"validate_sofic\n{table}",
        extra={"stages": depth, "passed": report.passed, "freeness": report.freeness_label},
    )
    return report


# ────────────────────── Convergence ─────────────────


def factor_distance(
    tower: Tower,
    coarse_level: int,
    fine_level: int,
    words: Sequence[GroupWord],
    alpha: IndexedPartition,
) -> DistanceReport:
    """d_inf(level m, level n, F, α) certified by the pullback witness; exact when it is 0."""
    words = normalize_words(words)
    witness = pullback_partition(tower, coarse_level, fine_level, alpha)
    value = stats_l1(stats(tower.level(coarse_level), words, alpha), stats(tower.level(fine_level), words, witness))
    return DistanceReport(
        kind="factor",
        value=value,
        exact=value == 0,
        witness=witness,
        evaluations=1,
        words=[format_word(w) for w in words],
        resolution=f"levels {coarse_level}->{fine_level}",
    )


class MatrixCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int
    n: int
    value: Fraction
    exact: bool
    direction: Literal["sym", "factor"] = "sym"

    @field_serializer("value")
    def _ser_value(self, value: Fraction) -> str:
        return fraction_text(value)

    def row(self) -> list:
        return [self.direction, self.m, self.n, fraction_text(self.value), float(self.value), str(self.exact).lower()]


class TowerConvergenceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    sizes: list[int]
    words: list[str]
    k: int
    cells: list[MatrixCell]
    factor_cells: list[MatrixCell]
    row_monotone: dict[int, bool] = Field(default_factory=dict)
    trend: Optional[Fraction] = None
    fix_trajectories: dict[str, list[Fraction]] = Field(default_factory=dict)

    @field_serializer("trend")
    def _ser_trend(self, value: Fraction | None) -> str | None:
        return None if value is None else fraction_text(value)

    @field_serializer("fix_trajectories")
    def _ser_fix(self, values: dict[str, list[Fraction]]) -> dict[str, list[str]]:
        return {w: [fraction_text(v) for v in ratios] for w, ratios in values.items()}

    def value(self, m: int, n: int) -> Fraction:
        for cell in self.cells:
            if (cell.m, cell.n) == (m, n):
                return cell.value
        raise KeyError((m, n))

    def rows(self) -> list[list]:
        return [cell.row() for cell in self.cells + self.factor_cells]


def tower_convergence(
    tower: Tower,
    words: Sequence[GroupWord],
    k: int,
    strategy: SearchStrategy,
    inner: SearchStrategy | None = None,
    factor_partitions: dict[int, Partition] | None = None,
) -> TowerConvergenceReport:
    """
    Symmetric distances between all pairs of levels plus factor-direction checks.

    Factor entries use the singleton partition of the coarser level unless
    ``factor_partitions`` supplies one per level.
    """
    words = normalize_words(words)
    depth = tower.depth
    pairs = [(m, n) for m in range(1, depth + 1) for n in range(m, depth + 1)]

    def solve(pair: tuple[int, int]) -> MatrixCell:
        m, n = pair
        if m == n:
            return MatrixCell(m=m, n=n, value=Fraction(0), exact=True)
        report = d_sym(tower.level(m), tower.level(n), words, k, strategy, inner)
        return MatrixCell(m=m, n=n, value=report.value, exact=report.exact)

    cells = ordered_map(solve, pairs)

    factor_cells = []
    for m, n in pairs:
        alpha = (factor_partitions or {}).get(m) or singleton_partition(tower.level(m).size)
        report = factor_distance(tower, m, n, words, alpha)
        factor_cells.append(MatrixCell(m=m, n=n, value=report.value, exact=report.exact, direction="factor"))

    rows = {m: [c.value for c in cells if c.m == m and c.n > m] for m in range(1, depth)}
    row_monotone = {m: all(x >= y for x, y in zip(vals, vals[1:])) for m, vals in rows.items()}
    trend = max(rows[depth - 1]) - max(rows[1]) if depth >= 2 else None

    fix_trajectories = {
        format_word(w): [fix_ratio(level, w) for level in tower.levels] for w in words if not w.is_identity
    }

    table = tabulate(
        [[m] + [""] * (m - 1) + [float(v) for v in rows[m]] for m in range(1, depth)],
        headers=["m"] + [f"n={n}" for n in range(2, depth + 1)],
        tablefmt="github",
    )
    logger.info(f"tower_convergence\n{table}", extra={"depth": depth, "k": k, "trend": str(trend)})
    return TowerConvergenceReport(
        sizes=tower.sizes,
        words=[format_word(w) for w in words],
        k=k,
        cells=cells,
        factor_cells=factor_cells,
        row_monotone=row_monotone,
        trend=trend,
        fix_trajectories=fix_trajectories,
    )
