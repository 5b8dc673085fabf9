"""Factor spaces of a measurement chain and operators built from them.

A chain layout is ``[system, apparatus_1, ..., apparatus_n]``. Each
apparatus factor has dimension ``|outcomes| + 1``: by default its basis is
the final states in outcome order followed by the init state, so the init
state is orthogonal to every final state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import InvalidInputError

SYSTEM = "system"
APPARATUS = "apparatus"


@dataclass(frozen=True)
class FactorSpace:
    label: str
    dim: int
    role: str
    outcomes: tuple[str, ...] = ()
    init_index: int | None = None
    finals: tuple[np.ndarray, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.role not in (SYSTEM, APPARATUS):
            raise InvalidInputError(f"factor {self.label!r}: unknown role {self.role!r}")
        if self.dim < 1:
            raise InvalidInputError(f"factor {self.label!r}: dimension must be positive")
        if self.role == SYSTEM:
            if self.outcomes or self.init_index is not None or self.finals:
                raise InvalidInputError(f"system factor {self.label!r} cannot carry outcomes or an init state")
            return
        if not self.outcomes:
            raise InvalidInputError(f"apparatus {self.label!r}: empty outcome alphabet")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise InvalidInputError(f"apparatus {self.label!r}: duplicate outcome labels")
        if self.init_index is None or not 0 <= self.init_index < self.dim:
            raise InvalidInputError(f"apparatus {self.label!r}: init_index missing or out of range")
        if len(self.finals) != len(self.outcomes):
            raise InvalidInputError(f"apparatus {self.label!r}: one final state per outcome required")
        vecs = [self.init_state, *self.finals]
        gram = np.array([[la.inner(a, b) for b in vecs] for a in vecs])
        if not la.approx_eq(gram, np.eye(len(vecs))):
            raise InvalidInputError(
                f"apparatus {self.label!r}: init and final states must be orthonormal"
            )

    @property
    def is_apparatus(self) -> bool:
        return self.role == APPARATUS

    @property
    def init_state(self) -> np.ndarray:
        if self.init_index is None:
            raise InvalidInputError(f"factor {self.label!r} has no init state")
        return la.basis(self.dim, self.init_index)

    def final_state(self, outcome: str) -> np.ndarray:
        try:
            return self.finals[self.outcomes.index(outcome)]
        except ValueError:
            raise InvalidInputError(
                f"factor {self.label!r} has no outcome {outcome!r}; known: {list(self.outcomes)}"
            ) from None

    def final_basis(self) -> np.ndarray:
        """Columns spanning the final subspace (the whole space for the system)."""
        if self.role == SYSTEM:
            return la.identity(self.dim)
        return la.as_operator(np.column_stack(self.finals))


def system(label: str, dim: int) -> FactorSpace:
    return FactorSpace(label, dim, SYSTEM)


def apparatus(label: str, outcomes: Sequence[str], finals: Sequence[np.ndarray] | None = None,
              init_index: int | None = None) -> FactorSpace:
    outcomes = tuple(str(o) for o in outcomes)
    dim = len(outcomes) + 1
    if finals is None:
        init_index = len(outcomes) if init_index is None else init_index
        slots = [i for i in range(dim) if i != init_index]
        finals = [la.basis(dim, i) for i in slots[: len(outcomes)]]
    else:
        finals = [la.as_state(f, name=f"final state of {label}") for f in finals]
        if init_index is None:
            init_index = len(outcomes)
    return FactorSpace(label, dim, APPARATUS, outcomes, init_index, tuple(finals))


@dataclass(frozen=True)
class ChainLayout:
    factors: tuple[FactorSpace, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors or self.factors[0].role != SYSTEM:
            raise InvalidInputError("layout must start with the system factor")
        if any(f.role == SYSTEM for f in self.factors[1:]):
            raise InvalidInputError("layout must contain exactly one system factor")
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise InvalidInputError(f"duplicate factor labels in {labels}")

    @property
    def n(self) -> int:
        """Number of apparatuses."""
        return len(self.factors) - 1

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return self.prefix_dim(len(self.factors))

    def prefix_dim(self, k: int) -> int:
        """Dimension of factors ``0..k-1``."""
        return int(np.prod(self.dims[:k], dtype=np.int64))

    def __getitem__(self, i: int) -> FactorSpace:
        return self.factors[i]

    def index(self, label_or_index) -> int:
        if isinstance(label_or_index, (int, np.integer)):
            i = int(label_or_index)
            if not 0 <= i < len(self.factors):
                raise InvalidInputError(f"factor index {i} out of range")
            return i
        for i, f in enumerate(self.factors):
            if f.label == label_or_index:
                return i
        raise InvalidInputError(f"unknown factor {label_or_index!r}")

    def truncate(self, k: int) -> "ChainLayout":
        """Layout keeping the system and apparatuses ``1..k``."""
        return ChainLayout(self.factors[: k + 1])

    def merge_prefix(self, p: int, label: str | None = None) -> "ChainLayout":
        """Fold factors ``0..p`` into a single system factor."""
        label = label or "+".join(f.label for f in self.factors[: p + 1])
        merged = system(label, self.prefix_dim(p + 1))
        return ChainLayout((merged, *self.factors[p + 1:]))

    def restricted_basis(self, k: int) -> np.ndarray:
        """Orthonormal columns spanning ``H_S (x) H_1 (x) ... (x) H_{k-1}`` inside factors ``0..k-1``."""
        return la.tensor_op(*(f.final_basis() for f in self.factors[:k]))

    def inits(self, start: int, stop: int | None = None) -> np.ndarray:
        """Tensor product of init states of factors ``start..stop-1``."""
        stop = len(self.factors) if stop is None else stop
        return la.tensor_state(*(self.factors[i].init_state for i in range(start, stop)))

    def pad_inits(self, v: np.ndarray, k: int) -> np.ndarray:
        """Extend a vector on factors ``0..k-1`` with init states on the rest."""
        if np.asarray(v).shape[0] != self.prefix_dim(k):
            raise InvalidInputError(f"vector has dimension {np.asarray(v).shape[0]}, expected {self.prefix_dim(k)}")
        return la.tensor_state(v, self.inits(k))

    def product_state(self, system_state: np.ndarray, outcomes: Sequence[str]) -> np.ndarray:
        """``system (x) Phi^1[m_1] (x) ... (x) Phi^k[m_k]`` padded with inits."""
        parts = [system_state] + [self.factors[i + 1].final_state(m) for i, m in enumerate(outcomes)]
        return self.pad_inits(la.tensor_state(*parts), len(outcomes) + 1)

    def to_json(self) -> dict:
        out = []
        for f in self.factors:
            d = {"label": f.label, "dim": f.dim, "role": f.role}
            if f.is_apparatus:
                d["outcomes"] = list(f.outcomes)
                d["init_index"] = f.init_index
                canonical = apparatus(f.label, f.outcomes)
                if not all(la.approx_eq(a, b, 0.0) for a, b in zip(f.finals, canonical.finals)) \
                        or f.init_index != canonical.init_index:
                    d["final_states"] = {m: la.to_pairs(v) for m, v in zip(f.outcomes, f.finals)}
            out.append(d)
        return {"factors": out}

    @classmethod
    def from_json(cls, data, where: str = "layout") -> "ChainLayout":
        if not isinstance(data, dict) or set(data) != {"factors"}:
            raise InvalidInputError("expected an object with exactly the key 'factors'", where)
        if not isinstance(data["factors"], list):
            raise InvalidInputError("'factors' must be a list", where)
        factors = []
        for i, d in enumerate(data["factors"]):
            loc = f"{where}.factors[{i}]"
            if not isinstance(d, dict):
                raise InvalidInputError("factor must be an object", loc)
            allowed = {"label", "dim", "role", "outcomes", "init_index", "final_states"}
            unknown = set(d) - allowed
            if unknown:
                raise InvalidInputError(f"unknown keys {sorted(unknown)}", loc)
            missing = {"label", "dim", "role"} - set(d)
            if missing:
                raise InvalidInputError(f"missing keys {sorted(missing)}", loc)
            try:
                if d["role"] == SYSTEM:
                    extra = set(d) & {"outcomes", "init_index", "final_states"}
                    if extra:
                        raise InvalidInputError(f"system factor cannot have {sorted(extra)}")
                    f = system(str(d["label"]), int(d["dim"]))
                else:
                    outcomes = d.get("outcomes")
                    if not isinstance(outcomes, list):
                        raise InvalidInputError("apparatus needs an 'outcomes' list")
                    finals = None
                    if "final_states" in d:
                        fs = d["final_states"]
                        if not isinstance(fs, dict) or set(fs) != set(map(str, outcomes)):
                            raise InvalidInputError("'final_states' must map every outcome to a vector")
                        finals = [la.from_pairs(fs[str(m)], name=f"final state {m}") for m in outcomes]
                    f = apparatus(str(d["label"]), outcomes, finals, d.get("init_index"))
                    if f.dim != int(d["dim"]):
                        raise InvalidInputError(
                            f"apparatus dim must be len(outcomes)+1 = {f.dim}, got {d['dim']}"
                        )
            except InvalidInputError as exc:
                if exc.location:
                    raise
                raise InvalidInputError(str(exc), loc) from None
            except (TypeError, ValueError) as exc:
                raise InvalidInputError(str(exc), loc) from None
            factors.append(f)
        try:
            return cls(tuple(factors))
        except InvalidInputError as exc:
            raise InvalidInputError(str(exc), where) from None


def embed_operator(layout: ChainLayout, op: np.ndarray, start: int = 0, stop: int | None = None) -> np.ndarray:
    """``I_{0..start-1} (x) op (x) I_{stop..n}`` on the full space.

    ``op`` acts on factors ``start..stop-1``; when ``stop`` is omitted it is
    inferred from the operator dimension.
    """
    op = la.as_operator(op)
    dims = layout.dims
    if stop is None:
        stop, acc = start, 1
        while acc < op.shape[0] and stop < len(dims):
            acc *= dims[stop]
            stop += 1
    want = int(np.prod(dims[start:stop], dtype=np.int64))
    if op.shape != (want, want):
        raise InvalidInputError(
            f"operator shape {op.shape} does not match factors {start}..{stop - 1} (dim {want})"
        )
    left = la.identity(int(np.prod(dims[:start], dtype=np.int64)))
    right = la.identity(int(np.prod(dims[stop:], dtype=np.int64)))
    return la.tensor_op(left, op, right)


def final_subspace_projector(layout: ChainLayout, factor, outcome: str, upto: int | None = None) -> np.ndarray:
    """Projector pinning one apparatus to a final state, on factors ``0..upto-1``."""
    i = layout.index(factor)
    f = layout[i]
    if not f.is_apparatus:
        raise InvalidInputError(f"factor {f.label!r} is not an apparatus")
    upto = len(layout.factors) if upto is None else upto
    if not i < upto:
        raise InvalidInputError(f"factor {i} lies outside factors 0..{upto - 1}")
    p = la.projector_onto(f.final_state(outcome))
    sub = ChainLayout(layout.factors[:upto]) if upto < len(layout.factors) else layout
    return embed_operator(sub, p, i, i + 1)


def joint_projector(layout: ChainLayout, pins, upto: int | None = None) -> np.ndarray:
    """Product of single-factor final projectors; identity for no pins."""
    upto = len(layout.factors) if upto is None else upto
    idx = [layout.index(f) for f, _ in pins]
    if len(set(idx)) != len(idx):
        raise InvalidInputError(f"duplicate factor in pins {list(pins)}")
    if idx != sorted(idx):
        raise InvalidInputError("pins must be listed in increasing factor order")
    out = np.eye(layout.prefix_dim(upto), dtype=np.complex128)
    for (f, m) in pins:
        out = out @ final_subspace_projector(layout, f, m, upto)
    return la.as_operator(out)
