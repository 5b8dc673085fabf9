"""Confirming points and retrodiction of intermediate states.

Targets are integers: ``0`` is the system, ``i >= 1`` is apparatus ``i``.
"Before step j" means immediately before measurement ``j``; "after step
k" means immediately after measurement ``k``.

Two routes recover earlier states from a final branch:

* factor backtracking (:func:`backtrack_cf`): a factor that is confirmed
  before step ``j`` already held its final state then;
* projector retrodiction (:func:`ru_step`, :func:`ru_recursive`): pin every
  apparatus left undisturbed by the last measurement on the virtual state
  just before it.

:func:`compare_routes` checks that both agree wherever both apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .errors import InvalidInputError, PVMRequiredError, RecursionBlockedError, ZeroStateError
from .measurement import (
    Branch,
    Chain,
    MeasurementFamily,
    check_completeness,
    check_pvm,
    compose_chain,
    evolve,
    virtual_state,
)
from .spaces import ChainLayout, apparatus, final_subspace_projector, joint_projector

SYSTEM_TARGET = 0


def system_unchanged_after(chain: Chain, j: int, tol: float = la.ATOL) -> bool:
    """Every ``M^j_m`` acts as ``I_S (x) K_m`` on the final-state subspace.

    ``K_m`` is read off the block for the first system basis vector and the
    whole restricted operator is then compared with ``I_S (x) K_m``.
    """
    if not 1 <= j <= chain.n:
        raise InvalidInputError(f"step {j} outside 1..{chain.n}")
    f = chain.family(j)
    e = chain.layout.restricted_basis(j)
    ds = chain.layout.dims[0]
    da_in = e.shape[1] // ds
    da_out = f.dim // ds
    for op in f.operators.values():
        r = (op @ e).reshape(ds, da_out, ds, da_in)
        k = r[0, :, 0, :]
        if not la.approx_eq(r, np.einsum("st,ab->satb", np.eye(ds), k), tol):
            return False
    return True


def apparatus_unchanged_after(chain: Chain, i: int, j: int, tol: float = la.ATOL) -> bool:
    """``M^j`` keeps apparatus ``i`` in whichever final state it holds."""
    if not 1 <= i < j <= chain.n:
        raise InvalidInputError(f"need 1 <= i < j <= {chain.n}, got i={i}, j={j}")
    layout = chain.layout
    f = chain.family(j)
    e = layout.restricted_basis(j)
    for m in layout[i].outcomes:
        p = final_subspace_projector(layout, i, m, upto=j)
        pe = p @ e
        q = np.eye(f.dim) - p
        for op in f.operators.values():
            if not la.approx_eq(q @ op @ pe, np.zeros(pe.shape), tol):
                return False
    return True


def unchanged_after(chain: Chain, target: int, j: int, tol: float = la.ATOL) -> bool:
    if target == SYSTEM_TARGET:
        return system_unchanged_after(chain, j, tol)
    return apparatus_unchanged_after(chain, target, j, tol)


def _steps_for(chain: Chain, target: int) -> range:
    if target == SYSTEM_TARGET:
        return range(1, chain.n + 1)
    if not 1 <= target <= chain.n:
        raise InvalidInputError(f"target {target} outside 0..{chain.n}")
    return range(target + 1, chain.n + 1)


def confirmed_before(chain: Chain, target: int, j: int, tol: float = la.ATOL) -> bool:
    """Unchanged after every measurement ``k >= j``."""
    if j not in _steps_for(chain, target):
        raise InvalidInputError(f"step {j} is not a valid step for target {target}")
    return all(unchanged_after(chain, target, k, tol) for k in range(j, chain.n + 1))


def confirming_point(chain: Chain, target: int, tol: float = la.ATOL) -> int:
    """Index of the apparatus at whose measurement ``target`` is settled.

    ``0`` stands for the system itself. Returns ``j - 1`` for the least
    ``j`` the target is confirmed before, or ``n`` when there is none.
    """
    steps = [j for j in _steps_for(chain, target) if confirmed_before(chain, target, j, tol)]
    return min(steps) - 1 if steps else chain.n


@dataclass(frozen=True)
class ConfirmingReport:
    system_point: int
    apparatus_points: dict[int, int]
    unchanged: dict[tuple[int, int], bool]

    def to_json(self, layout: ChainLayout) -> dict:
        name = lambda i: layout[i].label  # noqa: E731
        return {
            "system": name(self.system_point),
            "apparatus": {name(i): name(p) for i, p in sorted(self.apparatus_points.items())},
            "unchanged_after": [
                {"target": name(t), "step": name(j), "unchanged": v}
                for (t, j), v in sorted(self.unchanged.items())
            ],
        }


def confirming_report(chain: Chain, tol: float = la.ATOL) -> ConfirmingReport:
    grid = {}
    for t in range(chain.n + 1):
        for j in _steps_for(chain, t):
            grid[(t, j)] = unchanged_after(chain, t, j, tol)

    def point(t):
        v = [j for j in _steps_for(chain, t) if all(grid[(t, k)] for k in range(j, chain.n + 1))]
        return min(v) - 1 if v else chain.n

    return ConfirmingReport(point(0), {i: point(i) for i in range(1, chain.n + 1)}, grid)


def system_factor(chain: Chain, branch: Branch, tol: float = la.ATOL) -> np.ndarray:
    """Normalized system state of a product branch ``Psi (x) Phi^1[m_1] (x) ...``."""
    layout = chain.layout
    ds = layout.dims[0]
    co = la.tensor_state(*(layout[k].final_state(m) for k, m in enumerate(branch.outcomes, start=1)))
    co = la.tensor_state(co, layout.inits(len(branch.outcomes) + 1))
    v = np.asarray(branch.vector)
    psi = la.normalize(v.reshape(ds, -1) @ co.conj(), tol)
    if not la.equal_up_to_phase(la.normalize(v), layout.product_state(psi, branch.outcomes), tol):
        raise InvalidInputError(f"branch {branch.outcomes} is not a product state")
    return psi


def backtrack_cf(chain: Chain, branch: Branch, target: int, j: int, tol: float = la.ATOL) -> np.ndarray:
    """State of ``target`` immediately before measurement ``j``.

    Only licensed when the target is confirmed before ``j``; other queries
    are rejected.
    """
    if j not in _steps_for(chain, target) or not confirmed_before(chain, target, j, tol):
        raise InvalidInputError(f"target {target} is not confirmed before step {j}; no inference")
    psi = system_factor(chain, branch, tol)
    if target == SYSTEM_TARGET:
        return psi
    return chain.layout[target].final_state(branch.outcomes[target - 1])


def ru_pins(chain: Chain, tol: float = la.ATOL) -> list[int]:
    """Apparatuses left unchanged by the last measurement."""
    return [i for i in range(1, chain.n) if apparatus_unchanged_after(chain, i, chain.n, tol)]


def ru_step(chain: Chain, initial: np.ndarray, branch: Branch, *, require_pvm: bool = True,
            tol: float = la.ATOL) -> np.ndarray:
    """Total state immediately after measurement ``n - 1``.

    Pins the apparatuses from :func:`ru_pins` to their outcomes in
    ``branch`` on the virtual state before measurement ``n`` and normalizes.
    ``require_pvm=False`` exists only to exhibit what goes wrong without the
    PVM premise.
    """
    if chain.n < 1:
        raise InvalidInputError("chain has no measurements")
    if require_pvm:
        bad = [f.slot for f in chain.families if not check_pvm(f, tol)]
        if bad:
            raise PVMRequiredError(f"families at slots {bad} are not projection-valued")
    pins = [(i, branch.outcomes[i - 1]) for i in ru_pins(chain, tol)]
    v = la.apply(joint_projector(chain.layout, pins), virtual_state(chain, initial, chain.n - 1))
    try:
        return la.normalize(v, tol)
    except ZeroStateError:
        raise ZeroStateError(
            f"pinning {pins} annihilates the virtual state for branch {branch.outcomes}"
        ) from None


def read_product_branch(layout: ChainLayout, v: np.ndarray, k: int, tol: float = la.ATOL):
    """Outcome tuple if ``v`` is ``psi (x) Phi^1[m_1] .. Phi^k[m_k] (x) inits``, else ``None``."""
    v = la.normalize(v)
    if k + 1 < len(layout.factors):
        tail = layout.inits(k + 1)
        head = np.asarray(v).reshape(-1, tail.shape[0])
        if not la.approx_eq(np.outer(head @ tail.conj(), tail), head, tol):
            return None
    out = []
    for i in range(1, k + 1):
        hit = [m for m in layout[i].outcomes
               if abs(la.norm(final_subspace_projector(layout, i, m) @ v) - 1.0) <= tol]
        if len(hit) != 1:
            return None
        out.append(hit[0])
    return tuple(out)


@dataclass(frozen=True)
class RetrodictedStates:
    """Recursive retrodiction of one final branch.

    ``states[k]`` is the total state right after measurement ``k`` on the
    full space (later apparatuses at init). ``factors[k]`` holds the
    factors of that state that split off as pure states. ``branches[L]``
    is the branch tuple of the chain truncated to ``L`` apparatuses.
    """

    outcomes: tuple
    states: dict[int, np.ndarray]
    factors: dict[int, dict[int, np.ndarray]]
    branches: dict[int, tuple]
    pins: dict[int, list[int]] = field(default_factory=dict)


def _separable_factors(layout: ChainLayout, v: np.ndarray, tol: float) -> dict[int, np.ndarray]:
    out = {}
    for i in range(len(layout.factors)):
        split = la.split_factor(layout.dims, v, [i], tol)
        if split is not None:
            out[i] = split[0]
    return out


def ru_recursive(chain: Chain, initial: np.ndarray, branch: Branch, *, tol: float = la.ATOL) -> RetrodictedStates:
    """Apply :func:`ru_step` down the chain, truncating one apparatus per level.

    Each intermediate result must be a product branch of the truncated chain
    before recursing further; otherwise :class:`RecursionBlockedError`.
    """
    n = chain.n
    layout = chain.layout
    final = la.normalize(branch.vector, tol)
    states = {n: final}
    branches = {n: tuple(branch.outcomes)}
    pins = {}
    cur_chain, cur = chain, Branch(tuple(branch.outcomes), final)
    level = n
    while level > 1:
        pins[level] = ru_pins(cur_chain, tol)
        v = ru_step(cur_chain, initial, cur, tol=tol)
        states[level - 1] = layout.pad_inits(v, level + 1)
        t = read_product_branch(cur_chain.layout, v, level - 1, tol)
        if t is None:
            if level - 1 > 1:
                raise RecursionBlockedError(
                    f"state after step {level - 1} is not a product branch; cannot recurse"
                )
            break
        branches[level - 1] = t
        d_last = cur_chain.layout.dims[level]
        vec = np.asarray(v).reshape(-1, d_last) @ cur_chain.layout[level].init_state.conj()
        cur_chain = cur_chain.truncate(level - 1)
        cur = Branch(t, la.as_state(vec))
        level -= 1
    factors = {k: _separable_factors(layout, s, tol) for k, s in states.items()}
    return RetrodictedStates(tuple(branch.outcomes), states, factors, branches, pins)


@dataclass(frozen=True)
class RouteComparison:
    level: int
    target: int
    step: int
    overlap: float
    agrees: bool


def compare_routes(chain: Chain, initial: np.ndarray, branch: Branch, tol: float = 1e-10) -> list[RouteComparison]:
    """Backtracked factor states against projector-retrodicted ones.

    At every recursion level ``L`` the truncated chain and its branch are
    queried for each target confirmed before some step ``j`` in ``2..L``;
    the answer is compared, up to phase, with the factor of the
    retrodicted state right after step ``j - 1``.
    """
    rec = ru_recursive(chain, initial, branch, tol=tol)
    out = []
    for level, t in sorted(rec.branches.items(), reverse=True):
        if level < 2:
            continue
        sub = chain.truncate(level)
        vec = la.apply(joint_projector(sub.layout, list(enumerate(t, start=1))),
                       evolve(sub, initial))
        if la.is_zero(vec, tol):
            continue
        b = Branch(t, la.normalize(vec))
        for target in range(level):
            for j in _steps_for(sub, target):
                if j < 2 or not confirmed_before(sub, target, j, tol):
                    continue
                cf = backtrack_cf(sub, b, target, j, tol)
                ru = rec.factors.get(j - 1, {}).get(target)
                ov = la.phase_overlap(cf, ru) if ru is not None else 0.0
                out.append(RouteComparison(level, target, j, ov, abs(ov - 1.0) <= tol))
    return out


@dataclass(frozen=True)
class ConfirmedStateViolation:
    outcomes: tuple
    target: int
    step: int
    at: str
    size: float


@dataclass(frozen=True)
class ConfirmedStatesReport:
    checked: int
    violations: list[ConfirmedStateViolation]

    @property
    def passed(self) -> bool:
        return not self.violations


def _claim_projector(layout: ChainLayout, target: int, psi: np.ndarray, outcomes, upto: int) -> np.ndarray:
    if target == SYSTEM_TARGET:
        rest = layout.prefix_dim(upto) // layout.dims[0]
        return la.tensor_op(la.projector_onto(psi), la.identity(rest))
    return final_subspace_projector(layout, target, outcomes[target - 1], upto)


def verify_confirmed_states(chain: Chain, initial: np.ndarray, tol: float = 1e-10) -> ConfirmedStatesReport:
    """Brute-force check that confirmed factors hold their final state earlier.

    For every nonzero branch and every (target, j) with the target confirmed
    before ``j``, let ``C`` project onto the claimed state of the target.
    Each measurement ``k = j..n`` must map ``C`` and ``I - C`` slices of the
    final-state subspace into themselves, and the actual virtual state before
    ``j`` must not leak between the two slices when run forward to the end.
    Raises :class:`InvalidInputError` if the chain breaks the domain condition.
    """
    chain.validate()
    layout = chain.layout
    n = chain.n
    grid = confirming_report(chain, tol).unchanged
    checked = 0
    violations = []
    for b in compose_chain(chain, initial, check=False):
        if la.is_zero(b.vector, tol):
            continue
        psi = system_factor(chain, b, 1e-9)
        for target in range(n + 1):
            for j in _steps_for(chain, target):
                if not all(grid[(target, k)] for k in range(j, n + 1)):
                    continue
                checked += 1
                for k in range(j, n + 1):
                    c = _claim_projector(layout, target, psi, b.outcomes, k)
                    e = layout.restricted_basis(k)
                    q = np.eye(c.shape[0]) - c
                    for m, op in chain.family(k).operators.items():
                        for what, size in (("into-claim", np.linalg.norm(c @ op @ q @ e)),
                                           ("out-of-claim", np.linalg.norm(q @ op @ c @ e))):
                            if size > tol:
                                violations.append(ConfirmedStateViolation(b.outcomes, target, j, f"step {k} outcome {m} {what}", float(size)))
                x = evolve(chain, initial, j - 1)
                c = _claim_projector(layout, target, psi, b.outcomes, j)
                cx = la.apply(c, x)
                ox = la.as_state(np.asarray(x) - cx)
                fwd_in = evolve(chain, cx, n, start=j)
                fwd_out = evolve(chain, ox, n, start=j)
                c_full = la.tensor_op(c, la.identity(layout.dim // c.shape[0]))
                leak1 = la.norm(c_full @ fwd_out)
                leak2 = la.norm(fwd_in - c_full @ fwd_in)
                for what, size in (("virtual state gains claim", leak1), ("virtual state loses claim", leak2)):
                    if size > tol:
                        violations.append(ConfirmedStateViolation(b.outcomes, target, j, what, float(size)))
    return ConfirmedStatesReport(checked, violations)


@dataclass(frozen=True)
class AnnihilationReport:
    pins: tuple[int, int]
    samples: int
    annihilated: int
    coincide: bool

    @property
    def rate(self) -> float:
        return self.annihilated / self.samples


def pinned_annihilation(chain: Chain, initial: np.ndarray, world, pins=(1, 2),
                        tol: float = la.ZERO_TOL) -> AnnihilationReport:
    """Pin two apparatuses to their sampled outcomes on the virtual state after both.

    Counts repetitions whose projected vector vanishes and whether that
    happens exactly when the two pinned outcomes differ.
    """
    i1, i2 = pins
    k = max(pins)
    v = virtual_state(chain, initial, k)
    cache = {}
    annihilated = 0
    coincide = True
    for t in world.tuples:
        key = (t[i1 - 1], t[i2 - 1])
        if key not in cache:
            p = joint_projector(chain.layout, [(i1, key[0]), (i2, key[1])])
            cache[key] = la.is_zero(p @ v, tol)
        zero = cache[key]
        annihilated += zero
        coincide &= zero == (key[0] != key[1])
    return AnnihilationReport(tuple(pins), len(world.tuples), annihilated, bool(coincide))


def _strip_trailing_identity(op: np.ndarray, d_keep: int, d_drop: int, tol: float) -> np.ndarray:
    r = np.asarray(op).reshape(d_keep, d_drop, d_keep, d_drop)
    a = r[:, 0, :, 0]
    if not la.approx_eq(op, np.kron(a, np.eye(d_drop)), tol):
        raise InvalidInputError("operator does not act trivially on the last factor")
    return a


def grouped_family(chain: Chain, first: int, tol: float = la.ATOL):
    """Merge measurements ``first`` and ``first + 1`` into one apparatus.

    The merged operators are ``M^{first+1}_b . M^{first}_a`` on factors
    ``0..first-1``, labelled ``a + b``. Measurement ``first + 1`` must be
    the last one and must act trivially on apparatus ``first``.
    """
    if first + 1 != chain.n:
        raise InvalidInputError("only the last two measurements can be grouped")
    layout = chain.layout
    fa, fb = chain.family(first), chain.family(first + 1)
    d = layout.prefix_dim(first)
    bs = {m: _strip_trailing_identity(op, d, layout.dims[first], tol) for m, op in fb.operators.items()}
    ops = {}
    for a in layout[first].outcomes:
        for b in layout[first + 1].outcomes:
            ops[f"{a}{b}"] = bs[b] @ fa[a]
    label = f"{layout[first].label}+{layout[first + 1].label}"
    app = apparatus(label, list(ops))
    new_layout = ChainLayout((*layout.factors[:first], app, *layout.factors[first + 2:]))
    fam = MeasurementFamily(first, ops, check=False)
    return Chain(new_layout, (*chain.families[: first - 1], fam))


@dataclass(frozen=True)
class NaiveRUReport:
    grouped_complete: bool
    grouped_pvm: bool
    naive_state: np.ndarray
    cf_states: dict[tuple, np.ndarray]
    overlaps: dict[tuple, float]
    contradiction: bool


def demonstrate_naive_ru_failure(chain: Chain, initial: np.ndarray, tol: float = 1e-10) -> NaiveRUReport:
    """Projector retrodiction on a merged non-PVM apparatus versus backtracking.

    Merges the last two measurements of ``chain`` into one apparatus, runs
    :func:`ru_step` on the merged chain with the PVM premise switched off,
    and compares the resulting state of the leading factors with the state
    obtained by backtracking on the original chain.
    """
    grouped = grouped_family(chain, chain.n - 1)
    gfam = grouped.family(grouped.n)
    n = chain.n
    keep = list(range(n - 1))
    naive = None
    cf_states, overlaps = {}, {}
    for b in compose_chain(chain, initial):
        if la.is_zero(b.vector, tol):
            continue
        gt = (*b.outcomes[: n - 2], b.outcomes[n - 2] + b.outcomes[n - 1])
        pins = list(enumerate(gt, start=1))
        gvec = la.apply(joint_projector(grouped.layout, pins), evolve(grouped, initial))
        gb = Branch(gt, la.normalize(gvec))
        state = ru_step(grouped, initial, gb, require_pvm=False, tol=tol)
        split = la.split_factor(grouped.layout.dims, state, keep, tol)
        lead = split[0] if split is not None else None
        rec = ru_recursive(chain, initial, b, tol=tol)
        lvl = rec.branches.get(n - 1)
        sub = chain.truncate(n - 1)
        vec = la.apply(joint_projector(sub.layout, list(enumerate(lvl, start=1))), evolve(sub, initial))
        sb = Branch(lvl, la.normalize(vec))
        parts = [backtrack_cf(sub, sb, 0, n - 1, tol)]
        parts += [backtrack_cf(sub, sb, i, n - 1, tol) for i in range(1, n - 1)]
        cf = la.tensor_state(*parts)
        cf_states[b.outcomes] = cf
        overlaps[b.outcomes] = la.phase_overlap(lead, cf) if lead is not None else 0.0
        naive = lead
    return NaiveRUReport(
        check_completeness(gfam, tol),
        check_pvm(gfam, tol),
        naive,
        cf_states,
        overlaps,
        any(abs(o - 1.0) > tol for o in overlaps.values()),
    )
