"""Finite probability spaces, string and cylinder measures, finite-level tests.

A *string* is a tuple of alphabet symbols. Symbols may be any hashable
value; world distributions use tuples of outcome labels. When every symbol
is a one-character string, a plain ``str`` is accepted as a string too.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError

SUM_TOL = 1e-10
# branches shorter than this are rounding noise of an exactly-zero branch
BRANCH_ZERO = 1e-12


@dataclass(frozen=True)
class FiniteProbabilitySpace:
    alphabet: tuple
    weights: tuple[float, ...]

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "weights", weights)
        if not alphabet:
            raise InvalidInputError("alphabet is empty")
        if len(set(alphabet)) != len(alphabet):
            raise InvalidInputError("alphabet has duplicate symbols")
        if len(weights) != len(alphabet):
            raise InvalidInputError("one weight per symbol required")
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise InvalidInputError("weights must be finite and non-negative")
        if abs(math.fsum(weights) - 1.0) > SUM_TOL:
            raise InvalidInputError(f"weights sum to {math.fsum(weights)!r}, not 1")

    @classmethod
    def from_mapping(cls, weights: Mapping) -> "FiniteProbabilitySpace":
        return cls(tuple(weights), tuple(weights.values()))

    def __getitem__(self, symbol) -> float:
        return self.weight(symbol)

    def weight(self, symbol) -> float:
        try:
            return self.weights[self.alphabet.index(symbol)]
        except ValueError:
            raise InvalidInputError(f"symbol {symbol!r} is not in the alphabet") from None

    def as_dict(self) -> dict:
        return dict(zip(self.alphabet, self.weights))

    def support(self) -> tuple:
        return tuple(a for a, w in zip(self.alphabet, self.weights) if w > 0)

    def to_json(self) -> dict:
        enc = [_symbol_to_json(a) for a in self.alphabet]
        return {"alphabet": enc, "weights": {_symbol_key(a): w for a, w in zip(self.alphabet, self.weights)}}

    @classmethod
    def from_json(cls, data, where: str = "distribution") -> "FiniteProbabilitySpace":
        if not isinstance(data, dict) or set(data) != {"alphabet", "weights"}:
            raise InvalidInputError("expected keys 'alphabet' and 'weights'", where)
        alphabet = tuple(_symbol_from_json(a) for a in data["alphabet"])
        w = data["weights"]
        keys = {_symbol_key(a) for a in alphabet}
        if not isinstance(w, dict) or set(w) != keys:
            raise InvalidInputError("'weights' keys must match the alphabet", where)
        return cls(alphabet, tuple(float(w[_symbol_key(a)]) for a in alphabet))


def _symbol_to_json(a):
    return list(a) if isinstance(a, tuple) else a


def _symbol_from_json(a):
    return tuple(a) if isinstance(a, list) else a


def _symbol_key(a) -> str:
    return ",".join(map(str, a)) if isinstance(a, tuple) else str(a)


def world_distribution(branches, tol: float = SUM_TOL) -> FiniteProbabilitySpace:
    """Tuple weights are the squared norms of the branch vectors.

    Branches with norm below ``BRANCH_ZERO`` get weight exactly 0 so they
    never count as part of the support.
    """
    branches = list(branches)
    weights = [float(np.vdot(b.vector, b.vector).real) for b in branches]
    weights = [0.0 if w <= BRANCH_ZERO**2 else w for w in weights]
    total = math.fsum(weights)
    if abs(total - 1.0) > tol:
        raise InvalidInputError(f"branch weights sum to {total!r}; the chain is not complete")
    return FiniteProbabilitySpace(tuple(b.outcomes for b in branches), tuple(weights))


def _as_string(P: FiniteProbabilitySpace, sigma) -> tuple:
    if isinstance(sigma, str):
        if all(isinstance(a, str) and len(a) == 1 for a in P.alphabet):
            return tuple(sigma)
        raise InvalidInputError("plain str strings need a one-character alphabet")
    return tuple(sigma)


def string_weight(P: FiniteProbabilitySpace, sigma) -> float:
    """``P(sigma)``: product of symbol weights; 1 for the empty string."""
    sigma = _as_string(P, sigma)
    w = 1.0
    for a in sigma:
        w *= P.weight(a)
    return w


def is_prefix_free(strings: Iterable[Sequence]) -> bool:
    ss = sorted({tuple(s) for s in strings}, key=len)
    seen = set()
    for s in ss:
        if any(s[:i] in seen for i in range(len(s) + 1)):
            return False
        seen.add(s)
    return True


def cylinder_measure(P: FiniteProbabilitySpace, strings) -> float:
    """Bernoulli measure of the union of cylinders over a prefix-free set."""
    ss = [_as_string(P, s) for s in strings]
    if len(set(ss)) != len(ss) or not is_prefix_free(ss):
        raise InvalidInputError("string set is not prefix-free")
    return math.fsum(string_weight(P, s) for s in ss)


def validate_representation(r: Callable[[tuple], float], alphabet: Sequence, length: int,
                            tol: float = SUM_TOL) -> bool:
    """``r(empty) = 1`` and ``r(s) = sum_a r(s a)`` for every string shorter than ``length``."""
    if abs(r(()) - 1.0) > tol:
        return False
    for n in range(length):
        for s in itertools.product(alphabet, repeat=n):
            if abs(r(s) - math.fsum(r(s + (a,)) for a in alphabet)) > tol:
                return False
    return True


def marginalize(P: FiniteProbabilitySpace, keep: Sequence[int] = (0,)) -> FiniteProbabilitySpace:
    """Sum out every tuple component not listed in ``keep``.

    Result symbols are tuples of the kept components.
    """
    if not all(isinstance(a, tuple) for a in P.alphabet):
        raise InvalidInputError("marginalize needs an alphabet of tuples")
    keep = tuple(keep)
    acc: dict = {}
    for a, w in zip(P.alphabet, P.weights):
        key = tuple(a[i] for i in keep)
        acc.setdefault(key, []).append(w)
    return FiniteProbabilitySpace(tuple(acc), tuple(math.fsum(ws) for ws in acc.values()))


@dataclass(frozen=True)
class MLTestFinite:
    """Finitely many levels of a Martin-Löf test, each a finite string set."""

    levels: Mapping[int, frozenset]

    def __post_init__(self):
        lv = {}
        for n, ss in self.levels.items():
            if int(n) < 1:
                raise InvalidInputError(f"test level {n} must be a positive integer")
            lv[int(n)] = frozenset(tuple(s) for s in ss)
        object.__setattr__(self, "levels", lv)

    def to_json(self) -> dict:
        return {"levels": {str(n): sorted([[_symbol_to_json(a) for a in s] for s in ss], key=str)
                           for n, ss in sorted(self.levels.items())}}

    @classmethod
    def from_json(cls, data, where: str = "test") -> "MLTestFinite":
        if not isinstance(data, dict) or set(data) != {"levels"}:
            raise InvalidInputError("expected exactly the key 'levels'", where)
        levels = {}
        for n, ss in data["levels"].items():
            try:
                levels[int(n)] = [tuple(_symbol_from_json(a) for a in s) for s in ss]
            except (TypeError, ValueError):
                raise InvalidInputError(f"bad level {n!r}", where) from None
        return cls(levels)


def check_ml_test(P: FiniteProbabilitySpace, t: MLTestFinite) -> bool:
    """Every level is prefix-free with cylinder measure below ``2**-n``."""
    for n, ss in t.levels.items():
        if not is_prefix_free(ss):
            return False
        if not cylinder_measure(P, ss) < 2.0 ** -n:
            return False
    return True


def covered_at_level(t: MLTestFinite, prefix: Sequence, n: int) -> bool:
    prefix = tuple(prefix)
    return any(prefix[: len(s)] == s for s in t.levels.get(n, ()))


def chain_representation(branches) -> Callable[[tuple], float]:
    """``p(sigma)`` for repeated runs of a chain, from the tensored branch vectors.

    Each symbol of ``sigma`` is an outcome tuple; the weight is the squared
    norm of the tensor product of the corresponding branch vectors.
    """
    vecs = {b.outcomes: np.asarray(b.vector) for b in branches}

    def r(sigma) -> float:
        v = np.ones(1, dtype=np.complex128)
        for t in sigma:
            v = np.kron(v, vecs[tuple(t)])
        return float(np.vdot(v, v).real)

    return r
