"""
Weak-containment pseudo-metrics between finite (or symbolic) actions.

    d_{F,α}(a, b)  = min over ordered β of ‖c(a,F,α) - c(b,F,β)‖₁     (d_inf)
    d_{F,k}(a, b)  = max over α with k blocks of d_{F,α}(a, b)          (d_sup)
    d̄_{F,k}(a, b)  = d_{F,k}(a, b) + d_{F,k}(b, a)                      (d_sym)

F always contains the identity before any computation. Exhaustive search
enumerates assignments in lexicographic order (point 0 most significant) and
keeps the first optimum, so witnesses are the lexicographically smallest ones.
"""

from __future__ import annotations

from enum import Enum
from fractions import Fraction
from typing import Literal, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_serializer
from tqdm import tqdm

from sofistat.config import CONFIG
from sofistat.errors import BudgetError, InputError
from sofistat.parallel import ordered_map
from sofistat.partitions import (
    CylinderPartition,
    FiniteModel,
    IndexedPartition,
    MeasureModel,
    Partition,
    StatsVector,
    as_model,
    finite_action_of,
    stats,
)
from sofistat.protocol import fraction_text
from sofistat.words import FiniteAction, GroupWord, evaluate, format_word, inverse_permutation, normalize_words


# ────────────────────── Strategy / report ───────────


class SearchMode(str, Enum):
    EXHAUSTIVE = "exhaustive"
    LOCAL = "local"


class SearchStrategy(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: SearchMode = SearchMode.EXHAUSTIVE
    restarts: int = Field(default_factory=lambda: CONFIG.local_restarts, ge=1)
    max_moves: int = Field(default_factory=lambda: CONFIG.local_max_moves, ge=0)
    seed: int = Field(0, ge=0, lt=1 << 64)
    budget: Optional[int] = Field(None, ge=1, description="overrides CONFIG.exhaustive_budget")

    @classmethod
    def exhaustive(cls, budget: int | None = None) -> "SearchStrategy":
        return cls(mode=SearchMode.EXHAUSTIVE, budget=budget)

    @classmethod
    def local(cls, restarts: int | None = None, max_moves: int | None = None, seed: int = 0) -> "SearchStrategy":
        if restarts is not None and restarts < 1:
            raise InputError(f"local search needs at least one restart, got {restarts}")
        if max_moves is not None and max_moves < 0:
            raise InputError(f"max_moves must be non-negative, got {max_moves}")
        return cls(
            mode=SearchMode.LOCAL,
            restarts=CONFIG.local_restarts if restarts is None else restarts,
            max_moves=CONFIG.local_max_moves if max_moves is None else max_moves,
            seed=seed,
        )

    @property
    def effective_budget(self) -> int:
        return self.budget or CONFIG.exhaustive_budget

    @property
    def is_exhaustive(self) -> bool:
        return self.mode is SearchMode.EXHAUSTIVE


class DistanceReport(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["inf", "sup", "sym", "factor"]
    value: Fraction
    exact: bool
    witness: Optional[IndexedPartition | CylinderPartition] = None
    evaluations: int = 0
    words: list[str] = Field(default_factory=list)
    resolution: str = ""
    components: list["DistanceReport"] = Field(default_factory=list)

    @field_serializer("value")
    def _ser_value(self, value: Fraction) -> str:
        return fraction_text(value)

    @field_serializer("witness")
    def _ser_witness(self, witness: Partition | None) -> dict | None:
        return None if witness is None else witness.to_dict()


DistanceReport.model_rebuild()


class VerdictReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    reports: list[DistanceReport]
    threshold: Fraction
    verdict: bool

    @field_serializer("threshold")
    def _ser_threshold(self, value: Fraction) -> str:
        return fraction_text(value)


# ────────────────────── Inner problem ───────────────


def _decode(indices: np.ndarray, n: int, k: int) -> np.ndarray:
    """Rows of base-k digits, point 0 most significant."""
    out = np.empty((indices.size, n), dtype=np.int64)
    rest = indices.copy()
    for x in range(n - 1, -1, -1):
        out[:, x] = rest % k
        rest //= k
    return out


class _Candidate:
    __slots__ = ("numerator", "assignment")

    def __init__(self, numerator: int, assignment: tuple[int, ...]) -> None:
        self.numerator = numerator
        self.assignment = assignment

    def better_than(self, other: Optional["_Candidate"], maximize: bool = False) -> bool:
        if other is None:
            return True
        if self.numerator != other.numerator:
            return self.numerator > other.numerator if maximize else self.numerator < other.numerator
        return self.assignment < other.assignment


class _InnerSolver:
    """Minimizes ‖target - c(b,F,β)‖₁ over ordered β on a fixed target action."""

    def __init__(self, b: FiniteAction, words: tuple[GroupWord, ...], k: int) -> None:
        self.b = b
        self.words = words
        self.k = k
        self.n = b.size
        self.forward = [evaluate(b, w) for w in words]
        self.backward = [inverse_permutation(p) for p in self.forward]
        self.identity_index = words.index(GroupWord.identity())
        self._cache: dict[tuple, tuple[_Candidate, int]] = {}

    def _scaled_target(self, target: StatsVector) -> tuple[np.ndarray, int]:
        if target.k != self.k or target.words != self.words:
            raise InputError("target statistics do not match the search shape")
        dtype = object if target.counts.dtype == object else np.int64
        return np.asarray(target.counts, dtype=dtype) * self.n, target.denominator

    # ── exhaustive ──

    def _score_chunk(self, scaled: np.ndarray, denominator: int, start: int, stop: int) -> _Candidate:
        k, n = self.k, self.n
        rows = _decode(np.arange(start, stop, dtype=np.int64), n, k)
        c = rows.shape[0]
        offsets = (np.arange(c, dtype=np.int64) * (k * k))[:, None]
        counts = np.empty((c, len(self.words), k, k), dtype=np.int64)
        for t, back in enumerate(self.backward):
            codes = rows * k + rows[:, back] + offsets
            counts[:, t] = np.bincount(codes.ravel(), minlength=c * k * k).reshape(c, k, k)
        if scaled.dtype == object:
            counts = counts.astype(object)
        objective = np.abs(scaled[None] - counts * denominator).sum(axis=(1, 2, 3))
        best = int(np.argmin(objective))
        return _Candidate(int(objective[best]), tuple(int(v) for v in rows[best]))

    def exhaustive(self, target: StatsVector, budget: int) -> tuple[_Candidate, int]:
        total = self.k**self.n
        if total > budget:
            raise BudgetError(f"exhaustive search needs {self.k}^{self.n} = {total} candidates > budget {budget}")
        cache_key = target.key()
        if cache_key in self._cache:
            return self._cache[cache_key]
        scaled, denominator = self._scaled_target(target)
        step = CONFIG.chunk_size
        starts = list(range(0, total, step))
        chunks = ordered_map(
            lambda s: self._score_chunk(scaled, denominator, s, min(s + step, total)),
            tqdm(starts, desc="exhaustive", disable=not CONFIG.progress or len(starts) < 2),
        )
        best: Optional[_Candidate] = None
        for cand in chunks:
            if cand.better_than(best):
                best = cand
        result = (best, total)
        self._cache[cache_key] = result
        return result

    # ── local search ──

    def greedy_fill(self, target: StatsVector) -> list[int]:
        """Contiguous fill with block sizes matching the target block measures (largest remainder)."""
        e = self.identity_index
        measures = [Fraction(int(target.counts[e, i, i]), target.denominator) for i in range(self.k)]
        raw = [m * self.n for m in measures]
        sizes = [int(r) for r in raw]
        order = sorted(range(self.k), key=lambda i: (-(raw[i] - sizes[i]), i))
        for i in order[: self.n - sum(sizes)]:
            sizes[i] += 1
        out: list[int] = []
        for block, size in enumerate(sizes):
            out.extend([block] * size)
        return out

    def local(
        self,
        target: StatsVector,
        strategy: SearchStrategy,
        warm_start: Sequence[int] | None = None,
    ) -> tuple[_Candidate, int]:
        scaled, denominator = self._scaled_target(target)
        rng = np.random.default_rng(strategy.seed)
        best: Optional[_Candidate] = None
        evaluations = 0
        for restart in range(strategy.restarts):
            if restart == 0 and warm_start is not None:
                init = list(warm_start)
            elif restart == (1 if warm_start is not None else 0):
                init = self.greedy_fill(target)
            else:
                init = rng.integers(0, self.k, size=self.n).tolist()
            state = _LocalState(self, scaled.tolist(), denominator, init)
            evaluations += state.descend(strategy.max_moves)
            cand = _Candidate(state.objective, tuple(state.beta))
            if cand.better_than(best):
                best = cand
        return best, evaluations


class _LocalState:
    """Assignment with incrementally maintained statistics counts and L1 objective."""

    def __init__(self, solver: _InnerSolver, scaled: list, denominator: int, beta: list[int]) -> None:
        self.solver = solver
        self.scaled = scaled
        self.denominator = denominator
        self.beta = list(beta)
        k = solver.k
        self.counts = [[[0] * k for _ in range(k)] for _ in solver.words]
        for t, back in enumerate(solver.backward):
            for x in range(solver.n):
                self.counts[t][self.beta[x]][self.beta[int(back[x])]] += 1
        self.objective = sum(
            abs(self.scaled[t][i][j] - self.counts[t][i][j] * denominator)
            for t in range(len(solver.words))
            for i in range(k)
            for j in range(k)
        )

    def _changes(self, x: int, v: int) -> dict[tuple[int, int, int], int]:
        beta = self.beta
        changes: dict[tuple[int, int, int], int] = {}
        for t, (fwd, back) in enumerate(zip(self.solver.forward, self.solver.backward)):
            for y in {x, int(fwd[x])}:
                by = int(back[y])
                old = (beta[y], beta[by])
                new = (v if y == x else beta[y], v if by == x else beta[by])
                if old == new:
                    continue
                changes[(t,) + old] = changes.get((t,) + old, 0) - 1
                changes[(t,) + new] = changes.get((t,) + new, 0) + 1
        return changes

    def delta(self, x: int, v: int) -> int:
        d = self.denominator
        total = 0
        for (t, i, j), change in self._changes(x, v).items():
            if change:
                c = self.counts[t][i][j]
                target = self.scaled[t][i][j]
                total += abs(target - (c + change) * d) - abs(target - c * d)
        return total

    def apply(self, x: int, v: int) -> None:
        delta = self.delta(x, v)
        for (t, i, j), change in self._changes(x, v).items():
            self.counts[t][i][j] += change
        self.beta[x] = v
        self.objective += delta

    def _best_single(self) -> tuple[int, int, int]:
        best = (0, -1, -1)
        for x in range(self.solver.n):
            for v in range(self.solver.k):
                if v != self.beta[x]:
                    d = self.delta(x, v)
                    if d < best[0]:
                        best = (d, x, v)
        return best

    def _first_swap(self) -> tuple[int, int] | None:
        n = self.solver.n
        for x in range(n):
            for y in range(x + 1, n):
                bx, by = self.beta[x], self.beta[y]
                if bx == by:
                    continue
                before = self.objective
                self.apply(x, by)
                self.apply(y, bx)
                improved = self.objective < before
                self.apply(y, by)
                self.apply(x, bx)
                if improved:
                    return x, y
        return None

    def descend(self, max_moves: int) -> int:
        """Greedy descent: best single reassignment, else first improving swap. Returns moves scored."""
        scored = 1
        for _ in range(max_moves):
            d, x, v = self._best_single()
            scored += self.solver.n * (self.solver.k - 1)
            if d < 0:
                self.apply(x, v)
                continue
            swap = self._first_swap()
            if swap is None:
                break
            x, y = swap
            bx, by = self.beta[x], self.beta[y]
            self.apply(x, by)
            self.apply(y, bx)
        return scored


# ────────────────────── Operations ──────────────────


def _target_action(b: FiniteAction | MeasureModel) -> FiniteAction:
    action = finite_action_of(b)
    if action is None:
        raise InputError("the target side of a distance must be a finite action")
    return action


def _resolution(a: MeasureModel, b: FiniteAction) -> str:
    return f"a={a.describe()}; b={FiniteModel(b).describe()}"


def _solve_inner(
    solver: _InnerSolver,
    target: StatsVector,
    strategy: SearchStrategy,
    warm_start: Sequence[int] | None = None,
) -> tuple[_Candidate, int]:
    if strategy.is_exhaustive:
        return solver.exhaustive(target, strategy.effective_budget)
    return solver.local(target, strategy, warm_start)


def d_inf(
    a: MeasureModel | FiniteAction,
    b: FiniteAction | MeasureModel,
    words: Sequence[GroupWord],
    alpha: Partition,
    strategy: SearchStrategy,
    warm_start: Sequence[int] | None = None,
) -> DistanceReport:
    """d_{F,α}(a,b): exact minimum (exhaustive) or best-found upper bound (local search)."""
    a = as_model(a)
    b = _target_action(b)
    words = normalize_words(words)
    solver = _InnerSolver(b, words, alpha.block_count)
    target = stats(a, words, alpha)
    best, evaluations = _solve_inner(solver, target, strategy, warm_start)
    value = Fraction(best.numerator, target.denominator * b.size)
    logger.debug("d_inf", extra={"value": str(value), "mode": strategy.mode.value, "evaluations": evaluations})
    return DistanceReport(
        kind="inf",
        value=value,
        exact=strategy.is_exhaustive,
        witness=IndexedPartition(best.assignment, alpha.block_count),
        evaluations=evaluations,
        words=[format_word(w) for w in words],
        resolution=_resolution(a, b),
    )


def _outer_score(
    a: FiniteAction,
    solver: _InnerSolver,
    assignment: Sequence[int],
    k: int,
    inner: SearchStrategy,
    warm_start: Sequence[int] | None = None,
) -> tuple[_Candidate, _Candidate, int]:
    target = stats(a, solver.words, IndexedPartition(assignment, k))
    best, evaluations = _solve_inner(solver, target, inner, warm_start)
    # numerators share the denominator target.denominator * n_b = n_a * n_b
    return _Candidate(best.numerator, tuple(int(v) for v in assignment)), best, evaluations


def d_sup(
    a: FiniteAction | MeasureModel,
    b: FiniteAction | MeasureModel,
    words: Sequence[GroupWord],
    k: int,
    strategy: SearchStrategy,
    inner: SearchStrategy | None = None,
) -> DistanceReport:
    """d_{F,k}(a,b): max over α of the inner minimum; a lower bound unless fully exhaustive."""
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    model = as_model(a)
    a_action = _target_action(model)
    b = _target_action(b)
    inner = inner or strategy
    words = normalize_words(words)
    solver = _InnerSolver(b, words, k)
    best: Optional[_Candidate] = None
    evaluations = 0

    if strategy.is_exhaustive:
        total = k**a_action.size
        if total > strategy.effective_budget:
            raise BudgetError(
                f"exhaustive outer search needs {k}^{a_action.size} = {total} partitions "
                f"> budget {strategy.effective_budget}"
            )
        for index in range(total):
            assignment = _decode(np.array([index], dtype=np.int64), a_action.size, k)[0].tolist()
            cand, _, used = _outer_score(a_action, solver, assignment, k, inner)
            evaluations += 1 + used
            if cand.better_than(best, maximize=True):
                best = cand
    else:
        rng = np.random.default_rng(strategy.seed)
        for _ in range(strategy.restarts):
            current = rng.integers(0, k, size=a_action.size).tolist()
            cand, witness, used = _outer_score(a_action, solver, current, k, inner)
            evaluations += 1 + used
            if cand.better_than(best, maximize=True):
                best = cand
            for _ in range(strategy.max_moves):
                x = int(rng.integers(0, a_action.size))
                v = int(rng.integers(0, k))
                if k == 1 or v == current[x]:
                    continue
                proposal = list(current)
                proposal[x] = v
                prop, prop_witness, used = _outer_score(a_action, solver, proposal, k, inner, witness.assignment)
                evaluations += 1 + used
                if prop.numerator > cand.numerator:
                    current, cand, witness = proposal, prop, prop_witness
                    if cand.better_than(best, maximize=True):
                        best = cand

    value = Fraction(best.numerator, a_action.size * b.size)
    exact = strategy.is_exhaustive and inner.is_exhaustive
    logger.debug("d_sup", extra={"value": str(value), "exact": exact, "evaluations": evaluations})
    return DistanceReport(
        kind="sup",
        value=value,
        exact=exact,
        witness=IndexedPartition(best.assignment, k),
        evaluations=evaluations,
        words=[format_word(w) for w in words],
        resolution=_resolution(model, b),
    )


def d_sym(
    a: FiniteAction | MeasureModel,
    b: FiniteAction | MeasureModel,
    words: Sequence[GroupWord],
    k: int,
    strategy: SearchStrategy,
    inner: SearchStrategy | None = None,
) -> DistanceReport:
    """d̄_{F,k}(a,b) = d_{F,k}(a,b) + d_{F,k}(b,a)."""
    forward = d_sup(a, b, words, k, strategy, inner)
    backward = d_sup(b, a, words, k, strategy, inner)
    return DistanceReport(
        kind="sym",
        value=forward.value + backward.value,
        exact=forward.exact and backward.exact,
        witness=forward.witness,
        evaluations=forward.evaluations + backward.evaluations,
        words=forward.words,
        resolution=forward.resolution,
        components=[forward, backward],
    )


def containment_verdict(
    a: MeasureModel | FiniteAction,
    b: FiniteAction | MeasureModel,
    words: Sequence[GroupWord],
    partitions: Sequence[Partition],
    strategy: SearchStrategy,
    threshold: Fraction,
) -> VerdictReport:
    """Finite-resolution surrogate for a ≺ b: every d_{F,α} on the family is at most ``threshold``."""
    reports = [d_inf(a, b, words, alpha, strategy) for alpha in partitions]
    verdict = all(r.value <= threshold for r in reports)
    logger.info(
        "containment_verdict",
        extra={"partitions": len(reports), "threshold": str(threshold), "verdict": verdict},
    )
    return VerdictReport(reports=reports, threshold=threshold, verdict=verdict)
