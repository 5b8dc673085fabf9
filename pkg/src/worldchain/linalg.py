"""Dense complex vectors and operators.

States are 1-D ``complex128`` arrays, operators are 2-D ones. Every array
returned here is read-only so values can be shared freely.

Tensor products use the row-major Kronecker convention: for ``a`` of
dimension ``da`` and ``b`` of dimension ``db`` the amplitude of
``a (x) b`` at index ``i * db + j`` is ``a[i] * b[j]``. All index arithmetic
elsewhere in the package relies on this.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, ZeroStateError

ATOL = 1e-9
ZERO_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


def as_state(v, *, name: str = "state") -> np.ndarray:
    a = np.asarray(v, dtype=np.complex128)
    if a.ndim != 1 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 1-D vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return _frozen(a)


def as_operator(m, *, name: str = "operator") -> np.ndarray:
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError(f"{name} must be a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return _frozen(a)


def basis(dim: int, index: int) -> np.ndarray:
    if not 0 <= index < dim:
        raise InvalidInputError(f"basis index {index} out of range for dimension {dim}")
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return _frozen(v)


def identity(dim: int) -> np.ndarray:
    return _frozen(np.eye(dim, dtype=np.complex128))


def zeros(rows: int, cols: int | None = None) -> np.ndarray:
    shape = (rows,) if cols is None else (rows, cols)
    return _frozen(np.zeros(shape, dtype=np.complex128))


def tensor_state(*vs: np.ndarray) -> np.ndarray:
    if not vs:
        return _frozen(np.ones(1))
    return _frozen(reduce(np.kron, (np.asarray(v, dtype=np.complex128) for v in vs)))


def tensor_op(*ops: np.ndarray) -> np.ndarray:
    if not ops:
        return _frozen(np.ones((1, 1)))
    return _frozen(reduce(np.kron, (np.asarray(o, dtype=np.complex128) for o in ops)))


def apply(op: np.ndarray, v: np.ndarray) -> np.ndarray:
    op = np.asarray(op)
    v = np.asarray(v)
    if op.ndim != 2 or v.ndim != 1 or op.shape[1] != v.shape[0]:
        raise InvalidInputError(
            f"cannot apply operator of shape {op.shape} to vector of shape {v.shape}"
        )
    return _frozen(op @ v)


def compose(*ops: np.ndarray) -> np.ndarray:
    """Matrix product ``ops[0] @ ops[1] @ ...`` with shape checking."""
    out = np.asarray(ops[0])
    for o in ops[1:]:
        o = np.asarray(o)
        if out.shape[1] != o.shape[0]:
            raise InvalidInputError(f"cannot compose shapes {out.shape} and {o.shape}")
        out = out @ o
    return _frozen(out)


def adjoint(op: np.ndarray) -> np.ndarray:
    return _frozen(np.asarray(op).conj().T)


def inner(u: np.ndarray, v: np.ndarray) -> complex:
    """<u|v>, conjugate-linear in ``u``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise InvalidInputError(f"inner product of mismatched shapes {u.shape} and {v.shape}")
    return complex(np.vdot(u, v))


def norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(v)))


def is_zero(v: np.ndarray, tol: float = ZERO_TOL) -> bool:
    return norm(v) <= tol


def normalize(v: np.ndarray, tol: float = ZERO_TOL) -> np.ndarray:
    n = norm(v)
    if n <= tol:
        raise ZeroStateError(f"cannot normalize a zero vector (norm {n:.3g})")
    return _frozen(np.asarray(v) / n)


def projector_onto(v: np.ndarray, tol: float = ATOL) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if abs(norm(v) - 1.0) > tol:
        raise InvalidInputError(f"projector_onto needs a unit vector, norm is {norm(v):.12g}")
    return _frozen(np.outer(v, v.conj()))


def approx_eq(x, y, tol: float = ATOL) -> bool:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        return False
    return bool(np.max(np.abs(x - y), initial=0.0) <= tol)


def phase_overlap(u: np.ndarray, v: np.ndarray) -> float:
    """|<u|v>|^2 / (|u|^2 |v|^2); 1 means equal up to a phase."""
    nu, nv = norm(u), norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return abs(inner(u, v)) ** 2 / (nu * nu * nv * nv)


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = ATOL) -> bool:
    """True when ``u = c v`` for some unit complex ``c``, within ``tol``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        return False
    ip = inner(v, u)
    phase = ip / abs(ip) if abs(ip) > 0 else 1.0
    return approx_eq(u, phase * v, tol)


def is_hermitian(op: np.ndarray, tol: float = ATOL) -> bool:
    op = np.asarray(op)
    return op.shape[0] == op.shape[1] and approx_eq(op, op.conj().T, tol)


def is_projector(op: np.ndarray, tol: float = ATOL) -> bool:
    op = np.asarray(op)
    return is_hermitian(op, tol) and approx_eq(op @ op, op, tol)


def projector_complement(projectors: Sequence[np.ndarray], tol: float = ATOL) -> np.ndarray:
    """``I - sum(P)`` for mutually orthogonal projectors.

    This is the square root of ``I - sum(P^dag P)`` in the only case we need.
    Non-projector or overlapping inputs are rejected instead of taking a
    general operator square root.
    """
    if not projectors:
        raise InvalidInputError("projector_complement needs at least one projector")
    ps = [as_operator(p) for p in projectors]
    dim = ps[0].shape[0]
    for i, p in enumerate(ps):
        if p.shape != (dim, dim):
            raise InvalidInputError(f"projector {i} has shape {p.shape}, expected {(dim, dim)}")
        if not is_projector(p, tol):
            raise InvalidInputError(f"operator {i} is not an orthogonal projector")
    for i in range(len(ps)):
        for j in range(i + 1, len(ps)):
            if not approx_eq(ps[i] @ ps[j], np.zeros((dim, dim)), tol):
                raise InvalidInputError(f"projectors {i} and {j} are not mutually orthogonal")
    return _frozen(np.eye(dim) - sum(ps))


def split_factor(dims: Sequence[int], v: np.ndarray, group: Iterable[int], tol: float = ATOL):
    """Split ``v`` as ``(group part) (x) (rest)`` if it is a product across that cut.

    ``dims`` are the factor dimensions of ``v``. Returns the normalized pair
    ``(g, r)`` with ``v/|v| = g (x) r`` (rest factors kept in order), or
    ``None`` when ``v`` is entangled across the cut.
    """
    dims = list(dims)
    group = sorted(set(group))
    rest = [i for i in range(len(dims)) if i not in group]
    t = np.asarray(v, dtype=np.complex128).reshape(dims).transpose(group + rest)
    dg = int(np.prod([dims[i] for i in group]))
    mat = t.reshape(dg, -1)
    u, s, vh = np.linalg.svd(mat)
    total = float(np.sqrt(np.sum(s**2)))
    if total <= ZERO_TOL:
        raise ZeroStateError("cannot factor a zero vector")
    if len(s) > 1 and s[1] / total > tol:
        return None
    g = u[:, 0]
    r = vh[0, :]
    # put the phase on the rest so g has a real non-negative leading entry
    k = int(np.argmax(np.abs(g)))
    ph = g[k] / abs(g[k])
    return _frozen(g / ph), _frozen(r * ph)


def to_pairs(a: np.ndarray) -> list:
    """Nested lists with each complex entry as ``[re, im]``."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 0:
        return [float(a.real), float(a.imag)]
    return [to_pairs(x) for x in a]


def from_pairs(data, *, name: str = "value") -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name}: expected nested [re, im] pairs ({exc})") from None
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise InvalidInputError(f"{name}: complex entries must be [re, im] pairs")
    return _frozen(arr[..., 0] + 1j * arr[..., 1])
