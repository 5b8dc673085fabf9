"""Measurement families, their algebraic checks, and chain composition.

A family at slot ``k`` holds one operator per outcome acting on factors
``0..k-1`` of the layout at full dimension (init directions included).
Measuring with it is the isometry

    state  ->  sum_m (M_m state) (x) Phi^k[m]

which is all of the interaction unitary that is ever needed, so the
unitary itself is never built.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import linalg as la
from .errors import InvalidInputError
from .spaces import ChainLayout, joint_projector


class MeasurementFamily:
    """Outcome-labelled operators ``{M_m}`` for the apparatus at ``slot``."""

    def __init__(self, slot: int, operators: Mapping[str, np.ndarray], *,
                 check: bool = True, tol: float = la.ATOL):
        if not operators:
            raise InvalidInputError("measurement family needs at least one outcome")
        self.slot = int(slot)
        self.alphabet = tuple(str(m) for m in operators)
        self.operators = {str(m): la.as_operator(op, name=f"M[{m}]") for m, op in operators.items()}
        shapes = {op.shape for op in self.operators.values()}
        if len(shapes) != 1:
            raise InvalidInputError(f"operators of slot {slot} have differing shapes {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise InvalidInputError(f"operators of slot {slot} must be square, got {shape}")
        self.dim = shape[0]
        if check and not check_completeness(self, tol):
            raise InvalidInputError(f"family at slot {slot} violates the completeness equation")

    def __getitem__(self, outcome: str) -> np.ndarray:
        return self.operators[outcome]

    def __repr__(self):
        return f"MeasurementFamily(slot={self.slot}, alphabet={self.alphabet}, dim={self.dim})"

    def to_json(self, layout: ChainLayout | None = None) -> dict:
        app = layout[self.slot].label if layout is not None else self.slot
        return {
            "apparatus": app,
            "outcomes": list(self.alphabet),
            "matrices": {m: la.to_pairs(self.operators[m]) for m in self.alphabet},
        }

    @classmethod
    def from_json(cls, data, layout: ChainLayout, where: str = "family") -> "MeasurementFamily":
        if not isinstance(data, dict):
            raise InvalidInputError("family must be an object", where)
        unknown = set(data) - {"apparatus", "outcomes", "matrices"}
        if unknown:
            raise InvalidInputError(f"unknown keys {sorted(unknown)}", where)
        missing = {"apparatus", "outcomes", "matrices"} - set(data)
        if missing:
            raise InvalidInputError(f"missing keys {sorted(missing)}", where)
        slot = layout.index(data["apparatus"])
        outcomes = data["outcomes"]
        mats = data["matrices"]
        if not isinstance(outcomes, list) or not isinstance(mats, dict):
            raise InvalidInputError("'outcomes' must be a list and 'matrices' an object", where)
        if set(mats) != set(map(str, outcomes)):
            raise InvalidInputError("'matrices' keys must equal 'outcomes'", where)
        ops = {str(m): la.from_pairs(mats[str(m)], name=f"{where}.matrices[{m!r}]") for m in outcomes}
        return cls(slot, ops, check=False)


def check_completeness(f: MeasurementFamily, tol: float = la.ATOL) -> bool:
    total = sum(op.conj().T @ op for op in f.operators.values())
    return la.approx_eq(total, np.eye(f.dim), tol)


def check_pvm(f: MeasurementFamily, tol: float = la.ATOL) -> bool:
    ops = [f.operators[m] for m in f.alphabet]
    if not all(la.is_projector(p, tol) for p in ops):
        return False
    zero = np.zeros((f.dim, f.dim))
    for a, b in itertools.combinations(ops, 2):
        if not la.approx_eq(a @ b, zero, tol):
            return False
    return la.approx_eq(sum(ops), np.eye(f.dim), tol)


def check_domain_condition(layout: ChainLayout, f: MeasurementFamily, tol: float = la.ATOL) -> bool:
    """Each ``M_m`` maps the final-state subspace of factors ``0..k-1`` into itself."""
    e = layout.restricted_basis(f.slot)
    if e.shape[0] != f.dim:
        return False
    leak = np.eye(f.dim) - e @ e.conj().T
    return all(la.approx_eq(leak @ op @ e, np.zeros(e.shape), tol) for op in f.operators.values())


@dataclass(frozen=True)
class Chain:
    """A layout plus one measurement family per apparatus, in slot order."""

    layout: ChainLayout
    families: tuple[MeasurementFamily, ...]

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        if len(self.families) != self.layout.n:
            raise InvalidInputError(
                f"layout has {self.layout.n} apparatuses but {len(self.families)} families were given"
            )
        for k, f in enumerate(self.families, start=1):
            if f.slot != k:
                raise InvalidInputError(f"family {k} declares slot {f.slot}")
            want = self.layout.prefix_dim(k)
            if f.dim != want:
                raise InvalidInputError(
                    f"family at slot {k} has dimension {f.dim}, factors 0..{k - 1} have {want}"
                )
            if set(f.alphabet) != set(self.layout[k].outcomes):
                raise InvalidInputError(
                    f"family at slot {k} outcomes {list(f.alphabet)} differ from apparatus "
                    f"{self.layout[k].label!r} outcomes {list(self.layout[k].outcomes)}"
                )

    @property
    def n(self) -> int:
        return len(self.families)

    def family(self, k: int) -> MeasurementFamily:
        return self.families[k - 1]

    def truncate(self, k: int) -> "Chain":
        return Chain(self.layout.truncate(k), self.families[:k])

    def alphabets(self) -> list[tuple[str, ...]]:
        return [self.layout[k].outcomes for k in range(1, self.n + 1)]

    def tuples(self):
        return list(itertools.product(*self.alphabets()))

    def validate(self, tol: float = la.ATOL) -> None:
        for f in self.families:
            if not check_completeness(f, tol):
                raise InvalidInputError(f"family at slot {f.slot} violates the completeness equation")
            if not check_domain_condition(self.layout, f, tol):
                raise InvalidInputError(
                    f"family at slot {f.slot} leaves the final-state subspace of factors 0..{f.slot - 1}"
                )


@dataclass(frozen=True)
class Branch:
    outcomes: tuple[str, ...]
    vector: np.ndarray

    @property
    def weight(self) -> float:
        return float(np.vdot(self.vector, self.vector).real)


def measurement_step(layout: ChainLayout, state: np.ndarray, f: MeasurementFamily,
                     tol: float = la.ATOL) -> dict[str, np.ndarray]:
    """Components ``(M_m state) (x) Phi^k[m]`` of one dilated measurement."""
    if not check_completeness(f, tol):
        raise InvalidInputError(f"family at slot {f.slot} violates the completeness equation")
    state = la.as_state(state)
    if state.shape[0] != f.dim:
        raise InvalidInputError(f"state dimension {state.shape[0]} does not match family dimension {f.dim}")
    app = layout[f.slot]
    return {m: la.tensor_state(f.operators[m] @ state, app.final_state(m)) for m in f.alphabet}


def dilate(layout: ChainLayout, state: np.ndarray, f: MeasurementFamily) -> np.ndarray:
    """Summed output of :func:`measurement_step`."""
    parts = measurement_step(layout, state, f)
    return la.as_state(sum(parts.values()))


def evolve(chain: Chain, initial: np.ndarray, steps: int | None = None, start: int = 1) -> np.ndarray:
    """Run measurements ``start..steps`` on a state over factors ``0..start-1``."""
    steps = chain.n if steps is None else steps
    v = la.as_state(initial)
    for k in range(start, steps + 1):
        v = dilate(chain.layout, v, chain.family(k))
    return v


def virtual_state(chain: Chain, initial: np.ndarray, k: int) -> np.ndarray:
    """Total state right after measurement ``k``, with remaining apparatuses at init."""
    return chain.layout.pad_inits(evolve(chain, initial, k), k + 1)


def compose_chain(chain: Chain, initial: np.ndarray, *, check: bool = True,
                  tol: float = la.ATOL) -> list[Branch]:
    """Every outcome tuple with its branch vector on the full space.

    The branch for ``(m_1..m_n)`` is the final total state with every
    apparatus pinned to its final state for that outcome.
    """
    if check:
        chain.validate(tol)
    initial = la.as_state(initial, name="initial state")
    if initial.shape[0] != chain.layout.dims[0]:
        raise InvalidInputError(
            f"initial state has dimension {initial.shape[0]}, system has {chain.layout.dims[0]}"
        )
    total = evolve(chain, initial)
    layout = chain.layout
    out = []
    for t in chain.tuples():
        pins = [(k, m) for k, m in enumerate(t, start=1)]
        out.append(Branch(t, la.apply(joint_projector(layout, pins), total)))
    return out


def _final_costate(layout: ChainLayout, outcomes: Sequence[str]) -> np.ndarray:
    return la.tensor_state(*(layout[k].final_state(m) for k, m in enumerate(outcomes, start=1)))


def extract_composed_operator(chain: Chain, outcomes: Sequence[str]) -> np.ndarray:
    """The operator ``M^{1..n}`` for one tuple, read off column by column."""
    layout = chain.layout
    ds = layout.dims[0]
    co = _final_costate(layout, outcomes)
    cols = []
    for s in range(ds):
        total = evolve(chain, la.basis(ds, s)).reshape(ds, -1)
        cols.append(total @ co.conj())
    return la.as_operator(np.column_stack(cols))


def composed_operators(chain: Chain) -> dict[tuple[str, ...], np.ndarray]:
    return {t: extract_composed_operator(chain, t) for t in chain.tuples()}
