"""
Free-group words and their action as permutations of finite sets.

Words act on the left and the last letter is applied first, so that
evaluate(a, w * v) == evaluate(a, w) ∘ evaluate(a, v), matching g(hx) = (gh)x.

Text syntax: ``1`` is the identity, ``a``..``z`` are generators 0..25 and the
uppercase letter is the inverse (``abA`` = g0 g1 g0^-1). Word lists are
comma-separated (``1,a,A``).
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from sofistat.errors import InputError

Letter = tuple[int, int]

MAX_GENERATORS = 26
IDENTITY_TEXT = "1"


def _free_reduce(raw: Iterable[Letter]) -> tuple[Letter, ...]:
    stack: list[Letter] = []
    for gen, sign in raw:
        if sign not in (1, -1):
            raise InputError(f"letter sign must be +1 or -1, got {sign}")
        if gen < 0:
            raise InputError(f"generator index must be non-negative, got {gen}")
        if stack and stack[-1] == (gen, -sign):
            stack.pop()
        else:
            stack.append((gen, sign))
    return tuple(stack)


@dataclass(frozen=True, slots=True)
class GroupWord:
    """Reduced word over free-group generators; the empty word is the identity."""

    letters: tuple[Letter, ...] = ()

    def __post_init__(self) -> None:
        if _free_reduce(self.letters) != self.letters:
            raise InputError(f"word is not reduced: {self.letters}")

    @classmethod
    def identity(cls) -> "GroupWord":
        return cls(())

    @classmethod
    def generator(cls, index: int, sign: int = 1) -> "GroupWord":
        return cls(((index, sign),))

    @property
    def is_identity(self) -> bool:
        return not self.letters

    @property
    def max_generator(self) -> int:
        return max((gen for gen, _ in self.letters), default=-1)

    def inverse(self) -> "GroupWord":
        return GroupWord(tuple((gen, -sign) for gen, sign in reversed(self.letters)))

    def power(self, n: int) -> "GroupWord":
        base = self if n >= 0 else self.inverse()
        return reduce(base.letters * abs(n))

    def __mul__(self, other: "GroupWord") -> "GroupWord":
        return reduce(self.letters + other.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return format_word(self)


def reduce(raw: Iterable[Letter]) -> GroupWord:
    """Freely reduce a sequence of (generator, ±1) letters."""
    return GroupWord(_free_reduce(raw))


def normalize_words(words: Sequence[GroupWord]) -> tuple[GroupWord, ...]:
    """Deduplicate preserving order and make sure the identity is present (first if added)."""
    seen: dict[GroupWord, None] = {}
    for w in words:
        seen.setdefault(w, None)
    out = tuple(seen)
    if GroupWord.identity() not in seen:
        out = (GroupWord.identity(),) + out
    return out


def all_reduced_words(generator_count: int, max_length: int) -> list[GroupWord]:
    """Nonempty reduced words of length <= max_length in shortlex order."""
    letters = [(g, s) for g in range(generator_count) for s in (1, -1)]
    out: list[GroupWord] = []
    frontier: list[tuple[Letter, ...]] = [()]
    for _ in range(max_length):
        nxt: list[tuple[Letter, ...]] = []
        for prefix in frontier:
            for letter in letters:
                if prefix and prefix[-1] == (letter[0], -letter[1]):
                    continue
                nxt.append(prefix + (letter,))
        out.extend(GroupWord(w) for w in nxt)
        frontier = nxt
    return out


# ────────────────────── Text syntax ─────────────────


def parse_word(text: str) -> GroupWord:
    text = text.strip()
    if text == IDENTITY_TEXT:
        return GroupWord.identity()
    if not text:
        raise InputError("empty word text; use '1' for the identity")
    raw: list[Letter] = []
    for ch in text:
        if ch in string.ascii_lowercase:
            raw.append((ord(ch) - ord("a"), 1))
        elif ch in string.ascii_uppercase:
            raw.append((ord(ch) - ord("A"), -1))
        else:
            raise InputError(f"invalid character {ch!r} in word {text!r}")
    return reduce(raw)


def format_word(word: GroupWord) -> str:
    if word.is_identity:
        return IDENTITY_TEXT
    if word.max_generator >= MAX_GENERATORS:
        raise InputError(f"generator {word.max_generator} has no letter")
    base = ord("a")
    return "".join(chr(base + g) if s == 1 else chr(base + g).upper() for g, s in word.letters)


def parse_word_list(text: str | Sequence[str]) -> list[GroupWord]:
    items = text.split(",") if isinstance(text, str) else list(text)
    words = [parse_word(item) for item in items if item.strip()]
    if not words:
        raise InputError("word list is empty")
    return words


def format_word_list(words: Iterable[GroupWord]) -> str:
    return ",".join(format_word(w) for w in words)


# ────────────────────── Finite actions ──────────────


def inverse_permutation(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


class FiniteAction:
    """Action of a free group on {0..n-1} by one permutation per generator, uniform measure."""

    __slots__ = ("size", "gens", "_inverses")

    def __init__(self, gens: Sequence[Sequence[int]] | Sequence[np.ndarray], size: int | None = None) -> None:
        arrays = [np.array(g, dtype=np.int64) for g in gens]
        if size is None:
            if not arrays:
                raise InputError("size is required for an action without generators")
            size = int(arrays[0].size)
        if size < 1:
            raise InputError(f"carrier size must be positive, got {size}")
        for index, perm in enumerate(arrays):
            if perm.ndim != 1 or perm.size != size:
                raise InputError(f"generator {index} has {perm.size} images, expected {size}")
            if not np.array_equal(np.sort(perm), np.arange(size)):
                raise InputError(f"generator {index} is not a bijection of {{0..{size - 1}}}")
            perm.flags.writeable = False
        self.size = size
        self.gens: tuple[np.ndarray, ...] = tuple(arrays)
        inverses = [inverse_permutation(p) for p in arrays]
        for inv in inverses:
            inv.flags.writeable = False
        self._inverses: tuple[np.ndarray, ...] = tuple(inverses)

    @property
    def generator_count(self) -> int:
        return len(self.gens)

    @property
    def point_mass(self) -> Fraction:
        return Fraction(1, self.size)

    def letter(self, gen: int, sign: int) -> np.ndarray:
        if gen >= len(self.gens):
            raise InputError(f"generator {gen} unknown to an action with {len(self.gens)} generators")
        return self.gens[gen] if sign == 1 else self._inverses[gen]

    def fingerprint(self) -> tuple:
        return (self.size,) + tuple(tuple(int(x) for x in g) for g in self.gens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FiniteAction) and self.fingerprint() == other.fingerprint()

    def __hash__(self) -> int:
        return hash(self.fingerprint())

    def __repr__(self) -> str:
        return f"FiniteAction(size={self.size}, generators={len(self.gens)})"


def identity_action(size: int, generator_count: int = 1) -> FiniteAction:
    ident = np.arange(size, dtype=np.int64)
    return FiniteAction([ident.copy() for _ in range(generator_count)], size=size)


def cyclic_action(size: int) -> FiniteAction:
    """Shift x -> x+1 mod size with a single generator."""
    return FiniteAction([(np.arange(size, dtype=np.int64) + 1) % size], size=size)


def evaluate(action: FiniteAction, word: GroupWord) -> np.ndarray:
    """Permutation p with p[x] = w·x; last letter applied first."""
    perm = np.arange(action.size, dtype=np.int64)
    for gen, sign in reversed(word.letters):
        perm = action.letter(gen, sign)[perm]
    return perm


def fix_ratio(action: FiniteAction, word: GroupWord) -> Fraction:
    """Measure of the fixed-point set of the word."""
    perm = evaluate(action, word)
    return Fraction(int(np.count_nonzero(perm == np.arange(action.size))), action.size)

