"""
Approximate homomorphisms of measure algebras, their counts and sofic entropy grids.

An (α, δ, F)-homomorphism into a finite action b assigns to every atom of α_F a
block of an ordered partition of b's carrier. It is valid when

    (i)  μ_b(f·φ(A) Δ φ(f·A)) < δ   for every block A of α and f in F
    (ii) Σ_atoms |μ_b(φ(atom)) - μ_a(atom)| < δ

with all measures compared exactly. Atoms are the nonempty blocks of α_F in
canonical order; φ of a union of atoms is the union of the assigned blocks.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import ClassVar, Iterator, Literal, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_serializer

from sofistat.config import CONFIG
from sofistat.errors import BudgetError, InfeasibleError, InputError
from sofistat.parallel import ordered_map
from sofistat.partitions import (
    IndexedPartition,
    MeasureModel,
    Partition,
    as_model,
    coarsening_map,
    generated_partition,
    nonempty_block_measures,
    shannon_entropy,
)
from sofistat.protocol import entropy_text, fraction_text, parse_fraction
from sofistat.sofic_towers import Tower, diagonal_product
from sofistat.words import FiniteAction, GroupWord, evaluate, format_word_list, inverse_permutation, normalize_words


# ────────────────────── Sources and assignments ─────


class HomSource:
    """The atoms of α_F with their measures and translate digits."""

    __slots__ = ("model", "alpha", "words", "generated", "codes", "measures", "digits", "identity_position")

    def __init__(self, model: MeasureModel | FiniteAction, alpha: Partition, words: Sequence[GroupWord]) -> None:
        self.model = as_model(model)
        self.alpha = alpha
        self.words = normalize_words(words)
        self.generated = generated_partition(self.model, self.words, alpha)
        atoms = nonempty_block_measures(self.model, self.generated)
        self.codes: tuple[int, ...] = tuple(atoms)
        self.measures: tuple[Fraction, ...] = tuple(atoms.values())
        k = alpha.block_count
        # digits[c][t]: block of α whose words[t]-translate contains atom c
        self.digits: tuple[tuple[int, ...], ...] = tuple(
            tuple((code // k ** (len(self.words) - 1 - t)) % k for t in range(len(self.words))) for code in self.codes
        )
        self.identity_position = self.words.index(GroupWord.identity())

    @property
    def atom_count(self) -> int:
        return len(self.codes)

    @property
    def block_count(self) -> int:
        return self.alpha.block_count

    def alpha_block(self, atom: int) -> int:
        return self.digits[atom][self.identity_position]

    def key(self) -> tuple:
        return (self.words, self.generated.key(), self.codes)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HomSource) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"HomSource(atoms={self.atom_count}, words={format_word_list(self.words)})"


class HomAssignment:
    """Target partition of b's carrier indexed by the atoms of ``source``."""

    __slots__ = ("source", "target")

    def __init__(self, source: HomSource, target: IndexedPartition | Sequence[int]) -> None:
        if not isinstance(target, IndexedPartition):
            target = IndexedPartition(target, source.atom_count)
        if target.block_count != source.atom_count:
            raise InputError(f"target has {target.block_count} blocks for {source.atom_count} atoms")
        self.source = source
        self.target = target

    def image(self, atoms: Sequence[int]) -> np.ndarray:
        """Boolean mask of φ(union of ``atoms``)."""
        return np.isin(self.target.assignment, list(atoms))

    def __repr__(self) -> str:
        return f"HomAssignment({self.target.assignment.tolist()})"


def hom_source(model: MeasureModel | FiniteAction, alpha: Partition, words: Sequence[GroupWord]) -> HomSource:
    return HomSource(model, alpha, words)


def identity_assignment(action: FiniteAction, alpha: IndexedPartition, words: Sequence[GroupWord]) -> HomAssignment:
    """Pull α_F over to the same carrier: each point goes to the atom containing it."""
    source = HomSource(action, alpha, words)
    relabel = {code: index for index, code in enumerate(source.codes)}
    return HomAssignment(source, [relabel[int(c)] for c in source.generated.assignment])


def restrict_assignment(phi: HomAssignment, coarse: HomSource) -> HomAssignment:
    """Restriction of φ to the algebra of a coarser α (extension rule on unions of fine atoms)."""
    fine = phi.source
    if fine.words != coarse.words:
        raise InputError("restriction needs the same word list")
    block_map = coarsening_map(fine.alpha, coarse.alpha)
    k = coarse.block_count
    lookup = {code: index for index, code in enumerate(coarse.codes)}
    atom_map = []
    for digits in fine.digits:
        code = 0
        for d in digits:
            code = code * k + block_map[d]
        atom_map.append(lookup[code])
    mapped = np.asarray(atom_map, dtype=np.int64)[phi.target.assignment]
    return HomAssignment(coarse, IndexedPartition(mapped, coarse.atom_count))


# ────────────────────── Validity ────────────────────


class _Checker:
    """Integer form of both homomorphism conditions for a fixed source, target action and δ."""

    def __init__(self, source: HomSource, b: FiniteAction, delta: Fraction) -> None:
        if delta <= 0:
            raise InputError(f"delta must be positive, got {delta}")
        if any(w.max_generator >= b.generator_count for w in source.words):
            raise InputError("target action lacks generators used by the word list")
        self.source = source
        self.n = b.size
        self.m = source.atom_count
        self.k = source.block_count
        self.forward = [evaluate(b, w) for w in source.words]
        self.backward = [inverse_permutation(p) for p in self.forward]
        self.e_digit = np.asarray([source.alpha_block(c) for c in range(self.m)], dtype=np.int64)
        self.f_digit = [
            np.asarray([source.digits[c][t] for c in range(self.m)], dtype=np.int64) for t in range(len(source.words))
        ]
        self.p, self.q = delta.numerator, delta.denominator
        self.lcm = math.lcm(*(mu.denominator for mu in source.measures))
        self.scaled_measures = [mu.numerator * (self.lcm // mu.denominator) for mu in source.measures]
        # (i) fails once a symmetric difference reaches sd_limit points
        self.sd_limit = -(-self.p * self.n // self.q)
        # (ii) holds iff Σ |cnt_c L - M_c n| * q < p n L
        self.measure_limit = self.p * self.n * self.lcm

    def measure_deviation(self, counts: Sequence[int]) -> int:
        return sum(abs(c * self.lcm - mu * self.n) for c, mu in zip(counts, self.scaled_measures))

    def measures_ok(self, counts: Sequence[int]) -> bool:
        return self.measure_deviation(counts) * self.q < self.measure_limit

    def equivariance_ok(self, beta: np.ndarray) -> bool:
        for t, back in enumerate(self.backward):
            translated = self.e_digit[beta[back]]
            pulled = self.f_digit[t][beta]
            differ = translated != pulled
            sd = np.bincount(translated[differ], minlength=self.k) + np.bincount(pulled[differ], minlength=self.k)
            if (sd >= self.sd_limit).any():
                return False
        return True

    def valid(self, beta: np.ndarray) -> bool:
        counts = np.bincount(beta, minlength=self.m).tolist()
        return self.measures_ok(counts) and self.equivariance_ok(beta)

    def valid_batch(self, betas: np.ndarray) -> np.ndarray:
        """Row-wise validity of a (samples, n) array of assignments."""
        s = betas.shape[0]
        offsets = (np.arange(s, dtype=np.int64) * self.m)[:, None]
        counts = np.bincount((betas + offsets).ravel(), minlength=s * self.m).reshape(s, self.m)
        deviation = np.zeros(s, dtype=object)
        for c, mu in enumerate(self.scaled_measures):
            deviation = deviation + np.abs(counts[:, c].astype(object) * self.lcm - mu * self.n)
        ok = deviation * self.q < self.measure_limit
        ok = ok.astype(bool)
        block_offsets = (np.arange(s, dtype=np.int64) * self.k)[:, None]
        for t, back in enumerate(self.backward):
            translated = self.e_digit[betas[:, back]]
            pulled = self.f_digit[t][betas]
            differ = translated != pulled
            hits = np.bincount(
                np.concatenate([(translated + block_offsets)[differ], (pulled + block_offsets)[differ]]),
                minlength=s * self.k,
            ).reshape(s, self.k)
            ok &= (hits < self.sd_limit).all(axis=1)
        return ok


def _check_source(phi: HomAssignment, expected: HomSource) -> None:
    if phi.source != expected:
        raise InputError("assignment source does not match the generated partition of (a, α, F)")


def is_hom(
    a: MeasureModel | FiniteAction,
    alpha: Partition,
    words: Sequence[GroupWord],
    delta: Fraction | str | float,
    b: FiniteAction,
    phi: HomAssignment,
) -> bool:
    source = HomSource(a, alpha, words)
    _check_source(phi, source)
    if phi.target.carrier_size != b.size:
        raise InputError(f"assignment covers {phi.target.carrier_size} points, target has {b.size}")
    return _Checker(source, b, parse_fraction(delta)).valid(phi.target.assignment)


# ────────────────────── Exact enumeration ───────────


def _dfs(checker: _Checker, first: int) -> Iterator[np.ndarray]:
    """Valid assignments with β[0] = first; pruned on partial deficits of both conditions."""
    n, m, k = checker.n, checker.m, checker.k
    forward = [p.tolist() for p in checker.forward]
    backward = [p.tolist() for p in checker.backward]
    e_digit = checker.e_digit.tolist()
    f_digit = [d.tolist() for d in checker.f_digit]
    lcm, scaled, q = checker.lcm, checker.scaled_measures, checker.q
    beta = [-1] * n
    counts = [0] * m
    deviation = [-mu * n for mu in scaled]
    sd = [[0] * k for _ in forward]
    sd_limit = checker.sd_limit

    def completed(x: int) -> list[tuple[int, int, int]]:
        """Symmetric-difference hits (t, e, g) whose pair closes when x is assigned."""
        hits = []
        for t in range(len(forward)):
            for y in {x, forward[t][x]}:
                by = backward[t][y]
                if y <= x and by <= x:
                    e, g = e_digit[beta[by]], f_digit[t][beta[y]]
                    if e != g:
                        hits.append((t, e, g))
        return hits

    def bound(remaining: int) -> int:
        over = sum(d for d in deviation if d > 0)
        under = -sum(d for d in deviation if d < 0)
        return over + max(0, under - remaining * lcm)

    def place(x: int, c: int) -> Optional[list[tuple[int, int, int]]]:
        beta[x] = c
        counts[c] += 1
        deviation[c] += lcm
        hits = completed(x)
        for t, e, g in hits:
            sd[t][e] += 1
            sd[t][g] += 1
        return hits

    def unplace(x: int, c: int, hits: list[tuple[int, int, int]]) -> None:
        for t, e, g in hits:
            sd[t][e] -= 1
            sd[t][g] -= 1
        deviation[c] -= lcm
        counts[c] -= 1
        beta[x] = -1

    def feasible(x: int, hits: list[tuple[int, int, int]]) -> bool:
        for t, e, g in hits:
            if sd[t][e] >= sd_limit or sd[t][g] >= sd_limit:
                return False
        return bound(n - x - 1) * q < checker.measure_limit

    def walk(x: int) -> Iterator[np.ndarray]:
        if x == n:
            yield np.asarray(beta, dtype=np.int64)
            return
        for c in range(m):
            hits = place(x, c)
            if feasible(x, hits):
                yield from walk(x + 1)
            unplace(x, c, hits)

    hits = place(0, first)
    if feasible(0, hits):
        yield from walk(1)
    unplace(0, first, hits)


def _require_budget(m: int, n: int, budget: int) -> None:
    if m**n > budget:
        raise BudgetError(f"exact hom enumeration needs {m}^{n} = {m**n} assignments > budget {budget}")


def iter_homs(
    a: MeasureModel | FiniteAction,
    alpha: Partition,
    words: Sequence[GroupWord],
    delta: Fraction | str | float,
    b: FiniteAction,
    budget: int | None = None,
) -> Iterator[HomAssignment]:
    """All valid homomorphisms in lexicographic order of their assignment arrays."""
    source = HomSource(a, alpha, words)
    checker = _Checker(source, b, parse_fraction(delta))
    _require_budget(checker.m, checker.n, budget or CONFIG.exhaustive_budget)
    for first in range(checker.m):
        for beta in _dfs(checker, first):
            yield HomAssignment(source, IndexedPartition(beta, checker.m))


# ────────────────────── Counting ────────────────────


class CountMethod(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["exact", "montecarlo"] = "exact"
    samples: int = Field(default_factory=lambda: CONFIG.mc_samples, ge=1)
    seed: int = Field(0, ge=0, lt=1 << 64)
    budget: Optional[int] = Field(None, ge=1)

    @classmethod
    def exact(cls, budget: int | None = None) -> "CountMethod":
        return cls(kind="exact", budget=budget)

    @classmethod
    def monte_carlo(cls, samples: int | None = None, seed: int = 0) -> "CountMethod":
        return cls(kind="montecarlo", samples=samples or CONFIG.mc_samples, seed=seed)


class HomCountReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    total_valid: int | float
    restricted_count: int | float
    method: Literal["exact", "exact-profile", "montecarlo"]
    exact: bool
    samples: Optional[int] = None
    seed: Optional[int] = None
    ci95: Optional[float] = None
    atoms: int = 0
    carrier: int = 0


def _xi_labels(source: HomSource, xi: Partition) -> np.ndarray:
    try:
        block_map = coarsening_map(source.alpha, xi)
    except InputError as exc:
        raise InputError("ξ must be refined by α") from exc
    return np.asarray([block_map[source.alpha_block(c)] for c in range(source.atom_count)], dtype=np.int64)


def _multinomial(sizes: Sequence[int]) -> int:
    out = math.factorial(sum(sizes))
    for s in sizes:
        out //= math.factorial(s)
    return out


def _compositions(checker: _Checker) -> Iterator[tuple[int, ...]]:
    """Atom-count vectors summing to n that satisfy the measure condition."""
    n, m, lcm, scaled = checker.n, checker.m, checker.lcm, checker.scaled_measures

    def walk(c: int, left: int, over: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if c == m - 1:
            counts = prefix + (left,)
            if checker.measures_ok(counts):
                yield counts
            return
        for size in range(left + 1):
            partial = over + abs(size * lcm - scaled[c] * n)
            if partial * checker.q >= checker.measure_limit:
                continue
            yield from walk(c + 1, left - size, partial, prefix + (size,))

    yield from walk(0, n, 0, ())


def _count_profile(checker: _Checker, xi_labels: np.ndarray, xi_blocks: int) -> tuple[int, int]:
    """Counts when every word is the identity: condition (i) is vacuous."""
    total = 0
    profiles: set[tuple[int, ...]] = set()
    labels = xi_labels.tolist()
    for counts in _compositions(checker):
        total += _multinomial(counts)
        sizes = [0] * xi_blocks
        for c, size in enumerate(counts):
            sizes[labels[c]] += size
        profiles.add(tuple(sizes))
    return total, sum(_multinomial(s) for s in profiles)


def _count_exact(checker: _Checker, xi_labels: np.ndarray, budget: int) -> tuple[int, int]:
    _require_budget(checker.m, checker.n, budget)

    def shard(first: int) -> tuple[int, set[tuple[int, ...]]]:
        total = 0
        restrictions: set[tuple[int, ...]] = set()
        for beta in _dfs(checker, first):
            total += 1
            restrictions.add(tuple(xi_labels[beta].tolist()))
        return total, restrictions

    shards = ordered_map(shard, range(checker.m))
    seen: set[tuple[int, ...]] = set()
    for _, restrictions in shards:
        seen |= restrictions
    return sum(total for total, _ in shards), len(seen)


def _count_monte_carlo(checker: _Checker, xi_labels: np.ndarray, method: CountMethod) -> tuple[float, int, float]:
    rng = np.random.default_rng(method.seed)
    step = max(1, CONFIG.chunk_size // max(1, checker.n))
    batches = []
    drawn = 0
    while drawn < method.samples:
        size = min(step, method.samples - drawn)
        batches.append(rng.integers(0, checker.m, size=(size, checker.n)))
        drawn += size
    flags = ordered_map(checker.valid_batch, batches)
    valid = 0
    restrictions: set[tuple[int, ...]] = set()
    for batch, ok in zip(batches, flags):
        valid += int(ok.sum())
        for beta in batch[ok]:
            restrictions.add(tuple(xi_labels[beta].tolist()))
    space = float(checker.m) ** checker.n
    fraction = valid / method.samples
    half_width = CONFIG.mc_confidence_z * math.sqrt(fraction * (1 - fraction) / method.samples) * space
    return fraction * space, len(restrictions), half_width


def count_homs(
    a: MeasureModel | FiniteAction,
    xi: Partition,
    alpha: Partition,
    words: Sequence[GroupWord],
    delta: Fraction | str | float,
    b: FiniteAction,
    method: CountMethod | None = None,
) -> HomCountReport:
    """|hom(a, α, F, δ, b)| and the number of distinct restrictions to ξ."""
    method = method or CountMethod.exact()
    source = HomSource(a, alpha, words)
    checker = _Checker(source, b, parse_fraction(delta))
    labels = _xi_labels(source, xi)
    common = {"atoms": checker.m, "carrier": checker.n}

    if method.kind == "montecarlo":
        total, restricted, ci = _count_monte_carlo(checker, labels, method)
        report = HomCountReport(
            total_valid=total,
            restricted_count=restricted,
            method="montecarlo",
            exact=False,
            samples=method.samples,
            seed=method.seed,
            ci95=ci,
            **common,
        )
    elif all(w.is_identity for w in source.words):
        total, restricted = _count_profile(checker, labels, xi.block_count)
        report = HomCountReport(
            total_valid=total, restricted_count=restricted, method="exact-profile", exact=True, **common
        )
    else:
        total, restricted = _count_exact(checker, labels, method.budget or CONFIG.exhaustive_budget)
        report = HomCountReport(total_valid=total, restricted_count=restricted, method="exact", exact=True, **common)

    logger.debug(
        "count_homs",
        extra={"method": report.method, "atoms": checker.m, "n": checker.n, "delta": str(delta), "valid": str(total)},
    )
    return report


# ────────────────────── Entropy ─────────────────────


def entropy_value(restricted_count: int | float, n: int) -> float:
    if restricted_count <= 0:
        return -math.inf
    return math.log(restricted_count) / n


def entropy_point(
    a: MeasureModel | FiniteAction,
    xi: Partition,
    alpha: Partition,
    words: Sequence[GroupWord],
    delta: Fraction | str | float,
    b: FiniteAction,
    method: CountMethod | None = None,
) -> float:
    """(1/|X_b|) log |hom(a, α, F, δ, b)|_ξ, or -inf for an empty hom set."""
    report = count_homs(a, xi, alpha, words, delta, b, method)
    return entropy_value(report.restricted_count, b.size)


class EntropyCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    xi_id: str
    alpha_id: str
    words_id: str
    delta: Fraction
    stage: int
    n: int
    total_valid: int | float
    restricted_count: int | float
    value: float

    @field_serializer("delta")
    def _ser_delta(self, value: Fraction) -> str:
        return fraction_text(value)

    @field_serializer("value")
    def _ser_value(self, value: float) -> str:
        return entropy_text(value)

    def row(self) -> list:
        return [
            self.xi_id,
            self.alpha_id,
            self.words_id,
            fraction_text(self.delta),
            self.stage,
            self.n,
            self.total_valid,
            self.restricted_count,
            entropy_text(self.value),
        ]


class StageAggregate(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage: int
    n: int
    value: float

    @field_serializer("value")
    def _ser_value(self, value: float) -> str:
        return entropy_text(value)


class EntropyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    CSV_HEADER: ClassVar[tuple[str, ...]] = (
        "xi", "alpha", "words", "delta", "stage", "n", "total_valid", "restricted_count", "value",
    )

    cells: list[EntropyCell]
    aggregates: list[StageAggregate]
    window_upper: float
    window_lower: float
    label: str = "truncated aggregates: min over the supplied ladders, upper bounds on the infima"
    descriptions: dict[str, str] = Field(default_factory=dict)
    method: str = "exact"

    @field_serializer("window_upper", "window_lower")
    def _ser_window(self, value: float) -> str:
        return entropy_text(value)

    @property
    def exact(self) -> bool:
        return self.method == "exact"

    def rows(self) -> list[list]:
        return [cell.row() for cell in self.cells]


def final_window(values: Sequence, fraction: int = 3) -> list:
    """The last ceil(len/fraction) entries."""
    if not values:
        return []
    return list(values[-math.ceil(len(values) / fraction):])


def entropy_grid(
    a: MeasureModel | FiniteAction,
    xi: Partition,
    alphas: Sequence[Partition],
    word_sets: Sequence[Sequence[GroupWord]],
    deltas: Sequence[Fraction | str | float],
    sigma: Sequence[FiniteAction],
    method: CountMethod | None = None,
    xi_id: str = "xi",
    alpha_ids: Sequence[str] | None = None,
) -> EntropyReport:
    """Entropy points over every ladder combination plus the min-aggregates per stage."""
    if not alphas or not word_sets or not deltas or not sigma:
        raise InputError("entropy grid ladders must be nonempty")
    method = method or CountMethod.exact()
    model = as_model(a)
    deltas = [parse_fraction(d) for d in deltas]
    alpha_ids = list(alpha_ids or [f"alpha{i}" for i in range(len(alphas))])
    word_ids = [format_word_list(normalize_words(ws)) for ws in word_sets]

    jobs = list(itertools.product(range(len(sigma)), range(len(alphas)), range(len(word_sets)), range(len(deltas))))

    def evaluate_cell(job: tuple[int, int, int, int]) -> EntropyCell:
        s, i, f, d = job
        report = count_homs(model, xi, alphas[i], word_sets[f], deltas[d], sigma[s], method)
        return EntropyCell(
            xi_id=xi_id,
            alpha_id=alpha_ids[i],
            words_id=word_ids[f],
            delta=deltas[d],
            stage=s,
            n=sigma[s].size,
            total_valid=report.total_valid,
            restricted_count=report.restricted_count,
            value=entropy_value(report.restricted_count, sigma[s].size),
        )

    cells = ordered_map(evaluate_cell, jobs)

    aggregates = []
    for s, action in enumerate(sigma):
        stage_cells = [c for c in cells if c.stage == s]
        per_alpha = []
        for alpha_id in alpha_ids:
            per_words = []
            for words_id in word_ids:
                per_words.append(
                    min(c.value for c in stage_cells if c.alpha_id == alpha_id and c.words_id == words_id)
                )
            per_alpha.append(min(per_words))
        aggregates.append(StageAggregate(stage=s, n=action.size, value=min(per_alpha)))

    window = [agg.value for agg in final_window(aggregates)]
    descriptions = {xi_id: repr(xi), **{aid: repr(p) for aid, p in zip(alpha_ids, alphas)}, "a": model.describe()}
    logger.info("entropy_grid", extra={"cells": len(cells), "stages": len(sigma), "window_upper": max(window)})
    return EntropyReport(
        cells=cells,
        aggregates=aggregates,
        window_upper=max(window),
        window_lower=min(window),
        descriptions=descriptions,
        method=method.kind,
    )


# ────────────────────── Tower experiments ───────────


class NonemptyLevel(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: int
    n: int
    total_valid: int | float
    restricted_count: int | float
    nonempty: bool
    exact: bool

    def row(self, tower_id: str) -> list:
        return [tower_id, self.level, self.n, self.total_valid, self.restricted_count, str(self.nonempty).lower()]


class NonemptinessReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("tower", "level", "n", "total_valid", "restricted_count", "nonempty")

    tower_id: str
    sizes: list[int]
    levels: list[NonemptyLevel]
    eventually_nonempty: bool
    first_nonempty: Optional[int] = None

    @property
    def exact(self) -> bool:
        return all(level.exact for level in self.levels)

    def rows(self) -> list[list]:
        return [level.row(self.tower_id) for level in self.levels]


def hom_nonemptiness(
    a: MeasureModel | FiniteAction,
    alpha: Partition,
    words: Sequence[GroupWord],
    delta: Fraction | str | float,
    tower: Tower,
    method: CountMethod | None = None,
    tower_id: str = "tower",
) -> NonemptinessReport:
    """
    Whether hom(a, α, F, δ, level) is empty at each level of a tower.

    Finite entropy along the tower's levels needs nonempty hom sets at every late
    stage, which is how weak containment of a in the tower's profinite action
    shows up at a fixed (α, F, δ). ``eventually_nonempty`` judges the final
    third of the levels.
    """
    method = method or CountMethod.exact()
    delta = parse_fraction(delta)

    def check(level: int) -> NonemptyLevel:
        b = tower.level(level)
        report = count_homs(a, alpha, alpha, words, delta, b, method)
        return NonemptyLevel(
            level=level,
            n=b.size,
            total_valid=report.total_valid,
            restricted_count=report.restricted_count,
            nonempty=report.total_valid > 0,
            exact=report.exact,
        )

    levels = ordered_map(check, range(1, tower.depth + 1))
    first = next((lvl.level for lvl in levels if lvl.nonempty), None)
    eventually = all(lvl.nonempty for lvl in final_window(levels))
    logger.info(
        "hom_nonemptiness",
        extra={"tower": tower_id, "nonempty": [lvl.nonempty for lvl in levels], "eventually": eventually},
    )
    return NonemptinessReport(
        tower_id=tower_id,
        sizes=tower.sizes,
        levels=levels,
        first_nonempty=first,
        eventually_nonempty=eventually,
    )


class SeparationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    CSV_HEADER: ClassVar[tuple[str, ...]] = ("sequence",) + EntropyReport.CSV_HEADER

    source: str
    matching: EntropyReport
    mismatched: EntropyReport
    matching_finite: bool
    mismatched_empty: bool
    separated: bool

    @property
    def exact(self) -> bool:
        return self.matching.exact and self.mismatched.exact

    def rows(self) -> list[list]:
        return [["matching"] + row for row in self.matching.rows()] + [
            ["mismatched"] + row for row in self.mismatched.rows()
        ]


def entropy_separation(
    matching: Tower,
    level: int,
    b: FiniteAction,
    mismatched: Tower,
    xi: Partition,
    alphas: Sequence[Partition],
    word_sets: Sequence[Sequence[GroupWord]],
    deltas: Sequence[Fraction | str | float],
    method: CountMethod | None = None,
    xi_id: str = "xi",
    alpha_ids: Sequence[str] | None = None,
) -> SeparationReport:
    """
    Entropy grids of (level of ``matching``) × b along the levels of both towers.

    Partitions live on the product carrier, point (x, y) at index x * |b| + y.
    The pair separates when every late aggregate along ``matching`` is finite
    while every late aggregate along ``mismatched`` is -inf.
    """
    if matching.generator_count != mismatched.generator_count:
        raise InputError("the two towers act by different numbers of generators")
    source = diagonal_product(matching.level(level), b)
    grids = [
        entropy_grid(source, xi, alphas, word_sets, deltas, tower.levels, method, xi_id=xi_id, alpha_ids=alpha_ids)
        for tower in (matching, mismatched)
    ]
    matching_finite = grids[0].window_lower > -math.inf
    mismatched_empty = grids[1].window_upper == -math.inf
    logger.info(
        "entropy_separation",
        extra={"matching": entropy_text(grids[0].window_lower), "mismatched": entropy_text(grids[1].window_upper)},
    )
    return SeparationReport(
        source=f"level {level} of {matching!r} x finite(n={b.size})",
        matching=grids[0],
        mismatched=grids[1],
        matching_finite=matching_finite,
        mismatched_empty=mismatched_empty,
        separated=matching_finite and mismatched_empty,
    )


# ────────────────────── Small-entropy generator ─────


def genprof_bound(level: int) -> Fraction:
    """2^-(N-1) + Σ_{n>=N} n 2^-(n-1), in closed form (2N+3) / 2^(N-1)."""
    return Fraction(2 * level + 3, 2 ** (level - 1))


def genprof_threshold(epsilon: Fraction, power: int | None = None) -> int:
    """
    Least N >= 1 whose bound is below min(ε, ε^power).

    The bound alone (power = 1) already gives a partition of entropy below ε,
    e.g. N = 6 for ε = 1/2. The default power 2 is stricter and yields N = 8
    for ε = 1/2 and N = 10 for ε = 1/4.
    """
    if epsilon <= 0:
        raise InputError(f"epsilon must be positive, got {epsilon}")
    power = power or CONFIG.genprof_bound_power
    target = min(epsilon, epsilon**power)
    level = 1
    while genprof_bound(level) >= target:
        level += 1
    return level


class GenprofResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    partition: IndexedPartition
    entropy: float
    threshold_level: int
    bound: Fraction
    depth: int
    fibers: list[tuple[int, int]] = Field(default_factory=list, description="(level, level point) per chosen block")

    @field_serializer("partition")
    def _ser_partition(self, partition: IndexedPartition) -> dict:
        return partition.to_dict()

    @field_serializer("bound")
    def _ser_bound(self, value: Fraction) -> str:
        return fraction_text(value)


def genprof_partition(tower: Tower, epsilon: Fraction | str | float, depth: int) -> GenprofResult:
    """
    Small-entropy partition {A_0, A_N, ..., A_{depth-1}} of the depth-level carrier.

    A_n is the fiber over the smallest level-n point that avoids the fibers already
    chosen; A_0 is the complement.
    """
    epsilon = parse_fraction(epsilon)
    if not 1 <= depth <= tower.depth:
        raise InputError(f"depth {depth} outside 1..{tower.depth}")
    for level in range(1, depth + 1):
        if tower.level(level).size < 2**level:
            raise InputError(f"level {level} has fewer than 2^{level} points; index gaps must be >= 2")
    threshold = genprof_threshold(epsilon)
    if threshold >= depth:
        raise InfeasibleError(f"depth {depth} too small for epsilon {epsilon}: needs depth > N = {threshold}")

    carrier = tower.level(depth).size
    assignment = np.zeros(carrier, dtype=np.int64)
    taken = np.zeros(carrier, dtype=bool)
    fibers: list[tuple[int, int]] = []
    for block, level in enumerate(range(threshold, depth), start=1):
        projection = tower.project(depth, level)
        for point in range(tower.level(level).size):
            fiber = projection == point
            if not (fiber & taken).any():
                break
        else:
            raise InfeasibleError(f"no level-{level} fiber avoids the blocks already chosen")
        assignment[fiber] = block
        taken |= fiber
        fibers.append((level, point))

    partition = IndexedPartition(assignment, len(fibers) + 1)
    entropy = shannon_entropy(tower.level(depth), partition)
    logger.info(
        "genprof_partition",
        extra={"epsilon": str(epsilon), "N": threshold, "depth": depth, "entropy": round(entropy, 6)},
    )
    return GenprofResult(
        partition=partition,
        entropy=entropy,
        threshold_level=threshold,
        bound=genprof_bound(threshold),
        depth=depth,
        fibers=fibers,
    )
