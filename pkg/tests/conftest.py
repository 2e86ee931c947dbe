from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from sofistat.config import CONFIG
from sofistat.partitions import IndexedPartition
from sofistat.words import FiniteAction, GroupWord, reduce


@pytest.fixture(autouse=True)
def _restore_config(monkeypatch):
    # the CLI mutates the process-wide settings
    for name in ("threads", "chunk_size", "exhaustive_budget", "progress"):
        monkeypatch.setattr(CONFIG, name, getattr(CONFIG, name))


@st.composite
def actions(draw, min_size: int = 1, max_size: int = 6, generators: int = 1) -> FiniteAction:
    n = draw(st.integers(min_size, max_size))
    gens = [draw(st.permutations(list(range(n)))) for _ in range(generators)]
    return FiniteAction(gens, size=n)


@st.composite
def words(draw, generators: int = 1, max_length: int = 3) -> GroupWord:
    letters = draw(
        st.lists(
            st.tuples(st.integers(0, generators - 1), st.sampled_from([1, -1])),
            max_size=max_length,
        )
    )
    return reduce(letters)


@st.composite
def partitions(draw, size: int, max_blocks: int = 3) -> IndexedPartition:
    k = draw(st.integers(1, max_blocks))
    assignment = draw(st.lists(st.integers(0, k - 1), min_size=size, max_size=size))
    return IndexedPartition(assignment, k)


def random_action(rng: np.random.Generator, n: int, generators: int = 1) -> FiniteAction:
    return FiniteAction([rng.permutation(n) for _ in range(generators)], size=n)


def random_partition(rng: np.random.Generator, n: int, k: int) -> IndexedPartition:
    return IndexedPartition(rng.integers(0, k, size=n), k)
