"""
Ordered partitions, measure models and exact statistics vectors.

A statistics vector c(a, F, α) collects the numbers μ(A_i ∩ w·A_j) for blocks
A_i, A_j of α and words w ∈ F. All measures are exact rationals; only Shannon
entropy is a float.

Partitions are ordered and may contain empty blocks. Joins index their blocks
row-major by the input block indices, so generated partitions α_F list their
atoms lexicographically in the tuple of translate indices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce as _fold
from typing import TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np
from loguru import logger

from sofistat.config import CONFIG
from sofistat.errors import InputError, UnsupportedPartitionError
from sofistat.words import (
    FiniteAction,
    GroupWord,
    evaluate,
    format_word,
    inverse_permutation,
)

if TYPE_CHECKING:
    from sofistat.sofic_towers import Tower

# Above this denominator statistics switch to Python-int (object) arrays.
_INT64_SAFE = 1 << 40


# ────────────────────── Partitions ──────────────────


class IndexedPartition:
    """Ordered partition of a finite carrier {0..n-1}; empty blocks allowed."""

    __slots__ = ("block_count", "assignment")

    def __init__(self, assignment: Sequence[int] | np.ndarray, block_count: int | None = None) -> None:
        arr = np.array(assignment, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise InputError("assignment must be a nonempty one-dimensional array")
        if block_count is None:
            block_count = int(arr.max()) + 1
        if block_count < 1:
            raise InputError(f"block_count must be >= 1, got {block_count}")
        if arr.min() < 0 or arr.max() >= block_count:
            raise InputError(f"assignment values must lie in 0..{block_count - 1}")
        arr.flags.writeable = False
        self.assignment = arr
        self.block_count = block_count

    @classmethod
    def from_blocks(cls, blocks: Sequence[Iterable[int]], size: int) -> "IndexedPartition":
        arr = np.full(size, -1, dtype=np.int64)
        for index, block in enumerate(blocks):
            for x in block:
                if arr[x] != -1:
                    raise InputError(f"point {x} appears in two blocks")
                arr[x] = index
        if (arr == -1).any():
            raise InputError("blocks do not cover the carrier")
        return cls(arr, len(blocks))

    @property
    def carrier_size(self) -> int:
        return int(self.assignment.size)

    def blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.block_count)]
        for x, b in enumerate(self.assignment.tolist()):
            out[b].append(x)
        return out

    def key(self) -> tuple:
        return (self.block_count, tuple(self.assignment.tolist()))

    def to_dict(self) -> dict:
        return {"kind": "indexed", "block_count": self.block_count, "assignment": self.assignment.tolist()}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndexedPartition) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"IndexedPartition({self.blocks()})"


class CylinderPartition:
    """
    Partition of a Bernoulli carrier determined by finitely many coordinates.

    ``table[index]`` is the block of the labeling whose mixed-radix index (first
    coordinate most significant) is ``index``.
    """

    __slots__ = ("coords", "alphabet", "table", "block_count")

    def __init__(
        self,
        coords: Sequence[GroupWord],
        alphabet: int,
        table: Sequence[int],
        block_count: int | None = None,
    ) -> None:
        coords = tuple(coords)
        if len(set(coords)) != len(coords):
            raise InputError("cylinder coordinates must be distinct")
        if alphabet < 1:
            raise InputError(f"alphabet size must be positive, got {alphabet}")
        table = tuple(int(b) for b in table)
        if len(table) != alphabet ** len(coords):
            raise InputError(f"labeling table needs {alphabet ** len(coords)} entries, got {len(table)}")
        if block_count is None:
            block_count = max(table) + 1
        if min(table) < 0 or max(table) >= block_count:
            raise InputError(f"table values must lie in 0..{block_count - 1}")
        self.coords: tuple[GroupWord, ...] = coords
        self.alphabet = alphabet
        self.table: tuple[int, ...] = table
        self.block_count = block_count

    def block_of(self, labels: Sequence[int]) -> int:
        index = 0
        for label in labels:
            index = index * self.alphabet + label
        return self.table[index]

    def key(self) -> tuple:
        return (self.block_count, self.alphabet, self.coords, self.table)

    def to_dict(self) -> dict:
        return {
            "kind": "cylinder",
            "block_count": self.block_count,
            "alphabet": self.alphabet,
            "coords": [format_word(c) for c in self.coords],
            "table": list(self.table),
        }

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CylinderPartition) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        coords = ",".join(format_word(c) for c in self.coords)
        return f"CylinderPartition(coords=[{coords}], alphabet={self.alphabet}, k={self.block_count})"


Partition = Union[IndexedPartition, CylinderPartition]


def trivial_partition(size: int) -> IndexedPartition:
    return IndexedPartition(np.zeros(size, dtype=np.int64), 1)


def singleton_partition(size: int) -> IndexedPartition:
    return IndexedPartition(np.arange(size, dtype=np.int64), size)


def coordinate_partition(alphabet: int, word: GroupWord | None = None) -> CylinderPartition:
    """Partition by the symbol at one coordinate (the identity coordinate by default)."""
    return CylinderPartition((word or GroupWord.identity(),), alphabet, range(alphabet), alphabet)


# ────────────────────── Measure models ──────────────


class FiniteModel:
    __slots__ = ("action",)

    def __init__(self, action: FiniteAction) -> None:
        self.action = action

    @property
    def generator_count(self) -> int:
        return self.action.generator_count

    def describe(self) -> str:
        return f"finite(n={self.action.size})"


class TowerLevelModel:
    """Level ``level`` (1-based) of a validated tower; statistics are counted on the level quotient."""

    __slots__ = ("tower", "level")

    def __init__(self, tower: "Tower", level: int) -> None:
        if not 1 <= level <= tower.depth:
            raise InputError(f"level {level} outside 1..{tower.depth}")
        self.tower = tower
        self.level = level

    @property
    def action(self) -> FiniteAction:
        return self.tower.level(self.level)

    @property
    def generator_count(self) -> int:
        return self.action.generator_count

    def describe(self) -> str:
        return f"tower-level(L={self.level}, n={self.action.size})"


class BernoulliModel:
    """Bernoulli shift of the free group on ``generator_count`` generators over a finite alphabet."""

    __slots__ = ("probabilities", "generator_count")

    def __init__(self, probabilities: Sequence[Fraction | int | str], generator_count: int = 1) -> None:
        probs = tuple(Fraction(p) for p in probabilities)
        if not probs:
            raise InputError("Bernoulli base needs at least one symbol")
        if any(p <= 0 for p in probs):
            raise InputError("Bernoulli base probabilities must be positive")
        if sum(probs) != 1:
            raise InputError(f"Bernoulli base probabilities sum to {sum(probs)}, not 1")
        if generator_count < 1:
            raise InputError("Bernoulli model needs at least one generator")
        self.probabilities = probs
        self.generator_count = generator_count

    @property
    def alphabet(self) -> int:
        return len(self.probabilities)

    def describe(self) -> str:
        probs = ",".join(str(p) for p in self.probabilities)
        return f"bernoulli(({probs}), r={self.generator_count})"


MeasureModel = Union[FiniteModel, TowerLevelModel, BernoulliModel]


def as_model(obj: MeasureModel | FiniteAction) -> MeasureModel:
    if isinstance(obj, FiniteAction):
        return FiniteModel(obj)
    if isinstance(obj, (FiniteModel, TowerLevelModel, BernoulliModel)):
        return obj
    raise InputError(f"not a measure model: {obj!r}")


def finite_action_of(model: MeasureModel | FiniteAction) -> FiniteAction | None:
    model = as_model(model)
    if isinstance(model, BernoulliModel):
        return None
    return model.action


def _check_words(model: MeasureModel, words: Iterable[GroupWord]) -> None:
    for w in words:
        if w.max_generator >= model.generator_count:
            raise InputError(
                f"word {format_word(w)} uses generator {w.max_generator}; "
                f"model has {model.generator_count}"
            )


def _check_partition(model: MeasureModel, p: Partition) -> None:
    if isinstance(model, BernoulliModel):
        if not isinstance(p, CylinderPartition):
            raise UnsupportedPartitionError("Bernoulli models only evaluate cylinder partitions")
        if p.alphabet != model.alphabet:
            raise InputError(f"cylinder alphabet {p.alphabet} != model alphabet {model.alphabet}")
        _check_words(model, p.coords)
        return
    if not isinstance(p, IndexedPartition):
        raise InputError("finite carriers take indexed partitions")
    if p.carrier_size != model.action.size:
        raise InputError(f"partition of {p.carrier_size} points on a carrier of {model.action.size}")


# ────────────────────── Operations ──────────────────


def translate(model: MeasureModel | FiniteAction, word: GroupWord, p: Partition) -> Partition:
    """Block i of the result is word·(block i of p)."""
    model = as_model(model)
    _check_partition(model, p)
    _check_words(model, [word])
    if word.is_identity:
        return p
    if isinstance(model, BernoulliModel):
        return CylinderPartition([word * c for c in p.coords], p.alphabet, p.table, p.block_count)
    # x ∈ w·A_i  iff  w^-1·x ∈ A_i
    inv = inverse_permutation(evaluate(model.action, word))
    return IndexedPartition(p.assignment[inv], p.block_count)


def _union_coords(*coord_lists: Sequence[GroupWord]) -> tuple[GroupWord, ...]:
    seen: dict[GroupWord, None] = {}
    for coords in coord_lists:
        for c in coords:
            seen.setdefault(c, None)
    return tuple(seen)


def _labelings(alphabet: int, length: int) -> Iterable[tuple[int, ...]]:
    return itertools.product(range(alphabet), repeat=length)


def _restrict_index(labels: Sequence[int], positions: Sequence[int], alphabet: int) -> int:
    index = 0
    for pos in positions:
        index = index * alphabet + labels[pos]
    return index


def join(p: Partition, q: Partition) -> Partition:
    """Common refinement; block (i, j) has index i*|q| + j and equals p_i ∩ q_j."""
    if p.block_count * q.block_count > CONFIG.max_join_blocks:
        raise InputError(
            f"join of {p.block_count} and {q.block_count} blocks exceeds max_join_blocks {CONFIG.max_join_blocks}"
        )
    if isinstance(p, IndexedPartition) and isinstance(q, IndexedPartition):
        if p.carrier_size != q.carrier_size:
            raise InputError(f"carrier mismatch: {p.carrier_size} vs {q.carrier_size}")
        return IndexedPartition(p.assignment * q.block_count + q.assignment, p.block_count * q.block_count)
    if isinstance(p, CylinderPartition) and isinstance(q, CylinderPartition):
        if p.alphabet != q.alphabet:
            raise InputError(f"alphabet mismatch: {p.alphabet} vs {q.alphabet}")
        coords = _union_coords(p.coords, q.coords)
        pos_p = [coords.index(c) for c in p.coords]
        pos_q = [coords.index(c) for c in q.coords]
        table = [
            p.table[_restrict_index(lab, pos_p, p.alphabet)] * q.block_count
            + q.table[_restrict_index(lab, pos_q, q.alphabet)]
            for lab in _labelings(p.alphabet, len(coords))
        ]
        return CylinderPartition(coords, p.alphabet, table, p.block_count * q.block_count)
    raise InputError("cannot join partitions of different carrier kinds")


def generated_partition(model: MeasureModel | FiniteAction, words: Sequence[GroupWord], p: Partition) -> Partition:
    """α_F: the join of the F-translates of p, in the order of ``words``."""
    if not words:
        raise InputError("word list is empty")
    model = as_model(model)
    return _fold(join, [translate(model, w, p) for w in words])


def _block_pairs(p: Partition, q: Partition) -> set[tuple[int, int]]:
    """Pairs (i, j) with p_i ∩ q_j nonempty (positive measure for full-support Bernoulli)."""
    joint = join(p, q)
    if isinstance(joint, IndexedPartition):
        codes = np.unique(joint.assignment).tolist()
    else:
        codes = sorted(set(joint.table))
    return {divmod(int(c), q.block_count) for c in codes}


def refines(p: Partition, q: Partition) -> bool:
    """True iff every block of q is a union of blocks of p (up to empty blocks)."""
    targets: dict[int, int] = {}
    for i, j in _block_pairs(p, q):
        if targets.setdefault(i, j) != j:
            return False
    return True


def coarsening_map(fine: Partition, coarse: Partition) -> tuple[int | None, ...]:
    """For each block of ``fine`` the block of ``coarse`` containing it (None for empty blocks)."""
    targets: dict[int, int] = {}
    for i, j in _block_pairs(fine, coarse):
        if targets.setdefault(i, j) != j:
            raise InputError(f"block {i} of the finer partition meets several coarse blocks")
    return tuple(targets.get(i) for i in range(fine.block_count))


def compress(p: Partition) -> tuple[Partition, tuple[int, ...]]:
    """Drop empty blocks, keeping the order of the others; returns the kept original indices."""
    if isinstance(p, IndexedPartition):
        used = sorted(set(p.assignment.tolist()))
        relabel = np.full(p.block_count, -1, dtype=np.int64)
        relabel[used] = np.arange(len(used))
        return IndexedPartition(relabel[p.assignment], len(used)), tuple(used)
    used = sorted(set(p.table))
    relabel = {b: i for i, b in enumerate(used)}
    return CylinderPartition(p.coords, p.alphabet, [relabel[b] for b in p.table], len(used)), tuple(used)


def _bernoulli_weights(model: BernoulliModel, length: int) -> tuple[list[int], int]:
    denominator = math.lcm(*(p.denominator for p in model.probabilities))
    numerators = [int(p * denominator) for p in model.probabilities]
    return numerators, denominator**length


def _bernoulli_labeling_weight(numerators: Sequence[int], labels: Sequence[int]) -> int:
    weight = 1
    for label in labels:
        weight *= numerators[label]
    return weight


def block_measures(model: MeasureModel | FiniteAction, p: Partition) -> tuple[Fraction, ...]:
    model = as_model(model)
    _check_partition(model, p)
    if isinstance(model, BernoulliModel):
        numerators, denominator = _bernoulli_weights(model, len(p.coords))
        totals = [0] * p.block_count
        for lab in _labelings(p.alphabet, len(p.coords)):
            totals[p.block_of(lab)] += _bernoulli_labeling_weight(numerators, lab)
        return tuple(Fraction(t, denominator) for t in totals)
    counts = np.bincount(p.assignment, minlength=p.block_count)
    n = p.carrier_size
    return tuple(Fraction(int(c), n) for c in counts)


def nonempty_block_measures(model: MeasureModel | FiniteAction, p: Partition) -> dict[int, Fraction]:
    """Block index -> measure for the positive-measure blocks only, in index order."""
    model = as_model(model)
    _check_partition(model, p)
    if isinstance(model, BernoulliModel):
        return {i: m for i, m in enumerate(block_measures(model, p)) if m > 0}
    used, counts = np.unique(p.assignment, return_counts=True)
    n = p.carrier_size
    return {int(b): Fraction(int(c), n) for b, c in zip(used, counts)}


def shannon_entropy(model: MeasureModel | FiniteAction, p: Partition) -> float:
    """-Σ μ(B) log μ(B), natural log; empty blocks contribute 0."""
    return -sum(float(m) * math.log(m) for m in block_measures(model, p) if m > 0)


# ────────────────────── Statistics vectors ──────────


@dataclass(frozen=True, eq=False)
class StatsVector:
    """
    Exact statistics μ(A_i ∩ w·A_j) stored as integer counts over a common denominator.

    ``counts[t, i, j] / denominator`` is the entry for ``words[t]``.
    """

    k: int
    words: tuple[GroupWord, ...]
    denominator: int
    counts: np.ndarray

    def entry(self, i: int, j: int, word: GroupWord) -> Fraction:
        return Fraction(int(self.counts[self.words.index(word), i, j]), self.denominator)

    @property
    def entries(self) -> dict[tuple[int, int, GroupWord], Fraction]:
        return {
            (i, j, w): Fraction(int(self.counts[t, i, j]), self.denominator)
            for t, w in enumerate(self.words)
            for i in range(self.k)
            for j in range(self.k)
        }

    def key(self) -> tuple:
        return (self.k, self.words, self.denominator, tuple(int(c) for c in self.counts.ravel()))


def _finite_stats_counts(action: FiniteAction, words: Sequence[GroupWord], p: IndexedPartition) -> np.ndarray:
    k = p.block_count
    out = np.empty((len(words), k, k), dtype=np.int64)
    for t, w in enumerate(words):
        translated = p.assignment[inverse_permutation(evaluate(action, w))]
        codes = p.assignment * k + translated
        out[t] = np.bincount(codes, minlength=k * k).reshape(k, k)
    return out


def _bernoulli_stats(model: BernoulliModel, words: Sequence[GroupWord], p: CylinderPartition) -> tuple[int, np.ndarray]:
    k = p.block_count
    layers: list[tuple[int, list[list[int]]]] = []
    for w in words:
        shifted = [w * c for c in p.coords]
        coords = _union_coords(p.coords, shifted)
        pos_base = [coords.index(c) for c in p.coords]
        pos_shift = [coords.index(c) for c in shifted]
        numerators, denominator = _bernoulli_weights(model, len(coords))
        layer = [[0] * k for _ in range(k)]
        for lab in _labelings(model.alphabet, len(coords)):
            i = p.table[_restrict_index(lab, pos_base, p.alphabet)]
            j = p.table[_restrict_index(lab, pos_shift, p.alphabet)]
            layer[i][j] += _bernoulli_labeling_weight(numerators, lab)
        layers.append((denominator, layer))
    common = math.lcm(*(d for d, _ in layers))
    dtype = np.int64 if common < _INT64_SAFE else object
    counts = np.empty((len(words), k, k), dtype=dtype)
    for t, (denominator, layer) in enumerate(layers):
        scale = common // denominator
        for i in range(k):
            for j in range(k):
                counts[t, i, j] = layer[i][j] * scale
    return common, counts


def stats(model: MeasureModel | FiniteAction, words: Sequence[GroupWord], p: Partition) -> StatsVector:
    """c(a, F, α): exact entries μ(A_i ∩ w·A_j) for every w in ``words``."""
    model = as_model(model)
    _check_partition(model, p)
    _check_words(model, words)
    words = tuple(words)
    if isinstance(model, BernoulliModel):
        denominator, counts = _bernoulli_stats(model, words, p)
    else:
        denominator = model.action.size
        counts = _finite_stats_counts(model.action, words, p)
    counts.flags.writeable = False
    logger.trace("stats_computed", extra={"model": model.describe(), "k": p.block_count, "words": len(words)})
    return StatsVector(p.block_count, words, denominator, counts)


def _check_shapes(s: StatsVector, t: StatsVector) -> None:
    if s.k != t.k or s.words != t.words:
        raise InputError("statistics vectors differ in block count or word list")


def l1_numerator(s: StatsVector, t: StatsVector) -> int:
    """Σ |s·D_t - t·D_s| (the L1 distance times D_s·D_t)."""
    sc, tc = s.counts, t.counts
    if s.denominator * t.denominator >= 1 << 62:
        sc, tc = sc.astype(object), tc.astype(object)
    return int(np.abs(sc * t.denominator - tc * s.denominator).sum())


def stats_l1(s: StatsVector, t: StatsVector) -> Fraction:
    """‖c(a,F,α) - c(b,F,β)‖₁, exact."""
    _check_shapes(s, t)
    return Fraction(l1_numerator(s, t), s.denominator * t.denominator)
