"""Sampling finite world prefixes and checking their typicality.

Draws come from numpy's Philox generator, a counter-based bit generator
whose output stream is fixed by the seed on every platform.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import InvalidInputError, ZeroStateError
from .measurement import Chain, evolve
from .probability import FiniteProbabilitySpace, _symbol_to_json
from .spaces import joint_projector


@dataclass(frozen=True)
class WorldPrefix:
    tuples: tuple
    seed: int | None
    source: FiniteProbabilitySpace = field(repr=False)

    def __len__(self):
        return len(self.tuples)

    def __getitem__(self, n: int):
        """The ``n``-th repetition, counting from 1."""
        if not 1 <= n <= len(self.tuples):
            raise InvalidInputError(f"repetition {n} outside 1..{len(self.tuples)}")
        return self.tuples[n - 1]

    def column(self, i: int) -> tuple:
        return tuple(t[i] for t in self.tuples)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(_symbol_to_json(t)) + "\n" for t in self.tuples)


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def sample_worlds(P: FiniteProbabilitySpace, N: int, seed: int) -> WorldPrefix:
    """``N`` i.i.d. draws by inverse CDF over the positive-weight symbols."""
    if N < 1:
        raise InvalidInputError(f"sample count must be at least 1, got {N}")
    support = [(a, w) for a, w in zip(P.alphabet, P.weights) if w > 0]
    cdf = np.cumsum([w for _, w in support])
    u = _generator(seed).random(N) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(support) - 1)
    symbols = [a for a, _ in support]
    return WorldPrefix(tuple(symbols[i] for i in idx), int(seed), P)


def world_from_list(P: FiniteProbabilitySpace, tuples: Sequence) -> WorldPrefix:
    tuples = tuple(tuple(t) if isinstance(t, list) else t for t in tuples)
    for n, t in enumerate(tuples, start=1):
        if t not in P.alphabet:
            raise InvalidInputError(f"repetition {n}: {t!r} is not in the alphabet")
    return WorldPrefix(tuples, None, P)


def check_support(P: FiniteProbabilitySpace, w: WorldPrefix) -> bool:
    weights = P.as_dict()
    return all(weights.get(t, 0.0) > 0 for t in w.tuples)


@dataclass(frozen=True)
class LLNReport:
    frequencies: dict
    deviations: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(d <= self.tol for d in self.deviations.values())

    @property
    def max_deviation(self) -> float:
        return max(self.deviations.values(), default=0.0)


def check_lln(P: FiniteProbabilitySpace, w: WorldPrefix, tol: float = 0.01) -> LLNReport:
    counts = Counter(w.tuples)
    n = len(w)
    freq = {a: counts.get(a, 0) / n for a in P.alphabet}
    dev = {a: abs(freq[a] - p) for a, p in zip(P.alphabet, P.weights)}
    return LLNReport(freq, dev, tol)


def branch_state_at(chain: Chain, initial: np.ndarray, w: WorldPrefix, n: int,
                    tol: float = la.ZERO_TOL) -> np.ndarray:
    """Normalized total state of the branch selected at repetition ``n``."""
    t = w[n]
    pins = list(enumerate(t, start=1))
    v = la.apply(joint_projector(chain.layout, pins), evolve(chain, initial))
    try:
        return la.normalize(v, tol)
    except ZeroStateError:
        raise ZeroStateError(f"repetition {n} selected {t!r}, whose branch is zero") from None
