import numpy as np
import pytest

from worldchain import linalg as la
from worldchain import retrodiction as rd
from worldchain.errors import InvalidInputError, PVMRequiredError, RecursionBlockedError, ZeroStateError
from worldchain.measurement import Branch, Chain, MeasurementFamily, compose_chain, dilate
from worldchain.probability import world_distribution
from worldchain.scenarios import NAMES, build_scenario, expected_report
from worldchain.spaces import ChainLayout, apparatus, joint_projector
from worldchain.typicality import sample_worlds

from oracles import R2, ket, psi_sf


def effective(name):
    return build_scenario(name).effective()


def branch(chain, psi, t):
    (b,) = [b for b in compose_chain(chain, psi) if b.outcomes == t]
    return Branch(t, la.normalize(b.vector))


def nonzero_branches(chain, psi):
    return [Branch(b.outcomes, la.normalize(b.vector)) for b in compose_chain(chain, psi) if b.weight > 1e-20]


def test_system_unchanged_examples():
    wig, _ = effective("wigner_friend")
    assert rd.system_unchanged_after(wig, 2)
    assert not rd.system_unchanged_after(wig, 1)
    dt, _ = effective("deutsch")
    assert not rd.system_unchanged_after(dt, 2)


def test_apparatus_unchanged_examples():
    wig, _ = effective("wigner_friend")
    assert rd.apparatus_unchanged_after(wig, 1, 2)
    dt, _ = effective("deutsch")
    assert not rd.apparatus_unchanged_after(dt, 1, 2)
    wdc, _ = effective("wdc")
    assert rd.apparatus_unchanged_after(wdc, 2, 3)
    assert not rd.apparatus_unchanged_after(wdc, 1, 3)
    assert rd.apparatus_unchanged_after(wdc, 1, 2)
    with pytest.raises(InvalidInputError):
        rd.apparatus_unchanged_after(wdc, 2, 2)


def _random_restricted(chain, k, rng):
    e = chain.layout.restricted_basis(k)
    c = rng.normal(size=e.shape[1]) + 1j * rng.normal(size=e.shape[1])
    return e @ c


def _probe_system(chain, j, rng, trials=30):
    # per-vector form: M(psi (x) phi) = psi (x) phi' for psi in H_S, phi in the apparatus finals
    lay = chain.layout
    ds = lay.dims[0]
    eapp = la.tensor_op(*(lay[i].final_basis() for i in range(1, j))) if j > 1 else np.ones((1, 1))
    for _ in range(trials):
        psi = la.normalize(rng.normal(size=ds) + 1j * rng.normal(size=ds))
        phi = eapp @ (rng.normal(size=eapp.shape[1]) + 1j * rng.normal(size=eapp.shape[1]))
        for op in chain.family(j).operators.values():
            out = op @ np.kron(psi, phi)
            if la.is_zero(out, 1e-12):
                continue
            split = la.split_factor((ds, out.size // ds), out, [0], 1e-9)
            if split is None or not la.equal_up_to_phase(split[0], psi, 1e-9):
                return False
    return True


def _probe_apparatus(chain, i, j, rng, trials=30):
    lay = chain.layout
    for _ in range(trials):
        v = _random_restricted(chain, j, rng)
        for m in lay[i].outcomes:
            p = joint_projector(ChainLayout(lay.factors[:j]), [(i, m)])
            x = p @ v
            for op in chain.family(j).operators.values():
                y = op @ x
                if not la.approx_eq(p @ y, y, 1e-9):
                    return False
    return True


@pytest.mark.parametrize("name", NAMES)
def test_unchanged_matches_vector_probes(name):
    chain, _ = effective(name)
    rng = np.random.default_rng(5)
    for j in range(1, chain.n + 1):
        assert rd.system_unchanged_after(chain, j) == _probe_system(chain, j, rng)
        for i in range(1, j):
            assert rd.apparatus_unchanged_after(chain, i, j) == _probe_apparatus(chain, i, j, rng)


@pytest.mark.parametrize("name", NAMES)
def test_confirming_points_match_expected(name):
    chain, _ = effective(name)
    ex = expected_report(name)
    rep = rd.confirming_report(chain)
    assert rep.system_point == ex.system_point == rd.confirming_point(chain, 0)
    assert rep.apparatus_points == ex.apparatus_points
    assert rep.apparatus_points[chain.n] == chain.n


@pytest.mark.parametrize("name", NAMES)
def test_confirming_points_brute_force(name):
    chain, _ = effective(name)
    n = chain.n
    for t in range(n + 1):
        lo = 1 if t == 0 else t + 1
        best = n
        for j in range(n, lo - 1, -1):
            if all(rd.unchanged_after(chain, t, k) for k in range(j, n + 1)):
                best = j - 1
            else:
                break
        assert rd.confirming_point(chain, t) == best


def test_backtrack_wigner():
    wig, psi = effective("wigner_friend")
    for a in "01":
        b = branch(wig, psi, (a, a))
        assert la.equal_up_to_phase(rd.backtrack_cf(wig, b, 0, 2), la.basis(2, int(a)))
        assert la.equal_up_to_phase(rd.backtrack_cf(wig, b, 1, 2), la.basis(3, int(a)))


def test_backtrack_wdc_w():
    wdc, psi = effective("wdc")
    for t in [("0", "1", "-"), ("1", "0", "+")]:
        b = branch(wdc, psi, t)
        assert la.approx_eq(rd.backtrack_cf(wdc, b, 2, 3), la.basis(4, int(t[1])))


def test_backtrack_rejects_unlicensed_query():
    dt, psi = effective("deutsch")
    b = branch(dt, psi, ("0", "+"))
    with pytest.raises(InvalidInputError, match="not confirmed"):
        rd.backtrack_cf(dt, b, 1, 2)
    wdc, psi = effective("wdc")
    with pytest.raises(InvalidInputError):
        rd.backtrack_cf(wdc, branch(wdc, psi, ("0", "0", "+")), 0, 2)


def test_ru_step_wigner():
    wig, psi = effective("wigner_friend")
    for a in "01":
        out = rd.ru_step(wig, psi, branch(wig, psi, (a, a)))
        assert la.equal_up_to_phase(out, ket((2, 3, 4), (int(a), int(a), 3)), 1e-12)


def test_ru_step_deutsch():
    dt, psi = effective("deutsch")
    want = np.kron(psi_sf("+"), [0, 0, 1])
    for k in "01":
        assert rd.ru_pins(dt) == []
        assert la.equal_up_to_phase(rd.ru_step(dt, psi, branch(dt, psi, (k, "+"))), want, 1e-12)


def test_ru_step_wdc():
    wdc, psi = effective("wdc")
    assert rd.ru_pins(wdc) == [2]
    for b in nonzero_branches(wdc, psi):
        k, beta, m = b.outcomes
        want = ket((2, 3, 4, 3), (int(beta), int(beta), int(beta), 2))
        assert la.equal_up_to_phase(rd.ru_step(wdc, psi, b), want, 1e-12)


def test_ru_step_requires_pvm():
    wdc, psi = effective("wdc")
    grouped = rd.grouped_family(wdc, 2)
    b = nonzero_branches(grouped, psi)[0]
    with pytest.raises(PVMRequiredError):
        rd.ru_step(grouped, psi, b)
    rd.ru_step(grouped, psi, b, require_pvm=False)


def _trailing_identity(chain):
    lay = ChainLayout((*chain.layout.factors, apparatus("X", ["x"])))
    fam = MeasurementFamily(chain.n + 1, {"x": np.eye(chain.layout.dim)})
    return Chain(lay, (*chain.families, fam))


def test_ru_step_zero_state():
    wig, psi = effective("wigner_friend")
    ext = _trailing_identity(wig)
    assert rd.ru_pins(ext) == [1, 2]
    with pytest.raises(ZeroStateError):
        rd.ru_step(ext, psi, Branch(("0", "1", "x"), np.zeros(ext.layout.dim)))


@pytest.mark.parametrize("name", NAMES)
def test_ru_step_forward_reproduces_branch(name):
    chain, psi = effective(name)
    lay = chain.layout
    for b in nonzero_branches(chain, psi):
        prev = rd.ru_step(chain, psi, b)
        head = np.asarray(prev).reshape(-1, lay.dims[-1]) @ lay[chain.n].init_state.conj()
        fwd = dilate(lay, head, chain.family(chain.n))
        got = joint_projector(lay, list(enumerate(b.outcomes, start=1))) @ fwd
        assert la.equal_up_to_phase(la.normalize(got), b.vector, 1e-10)


def test_ru_recursive_wdc():
    wdc, psi = effective("wdc")
    for b in nonzero_branches(wdc, psi):
        beta = int(b.outcomes[1])
        rec = rd.ru_recursive(wdc, psi, b)
        assert rec.branches[2] == (str(beta), str(beta))
        assert la.equal_up_to_phase(rec.factors[1][0], la.basis(2, beta), 1e-12)
        assert la.equal_up_to_phase(rec.factors[1][1], la.basis(3, beta), 1e-12)
        assert la.equal_up_to_phase(rec.states[1], ket((2, 3, 4, 3), (beta, beta, 3, 2)), 1e-12)
        assert la.equal_up_to_phase(rec.states[3], b.vector, 1e-12)


def test_ru_recursive_wigner_matches_backtrack():
    wig, psi = effective("wigner_friend")
    for b in nonzero_branches(wig, psi):
        rec = rd.ru_recursive(wig, psi, b)
        assert la.equal_up_to_phase(rec.factors[1][0], rd.backtrack_cf(wig, b, 0, 2), 1e-12)
        assert la.equal_up_to_phase(rec.factors[1][1], rd.backtrack_cf(wig, b, 1, 2), 1e-12)


def test_ru_recursive_single_step():
    chain, psi = effective("deutsch_mere_f")
    (b,) = nonzero_branches(chain, psi)
    rec = rd.ru_recursive(chain, psi, b)
    assert list(rec.states) == [1]
    assert la.approx_eq(rec.states[1], b.vector)


def test_ru_recursive_blocked_by_entangled_intermediate():
    dt, psi = effective("deutsch")
    lay = ChainLayout((*dt.layout.factors, apparatus("X", ["a", "b"])))
    target = np.kron(psi_sf("+"), [1, 0, 0])
    pa = la.projector_onto(target)
    fam = MeasurementFamily(3, {"a": pa, "b": la.projector_complement([pa])})
    chain = Chain(lay, (*dt.families, fam))
    chain.validate()
    assert rd.ru_pins(chain) == [2]
    b = nonzero_branches(chain, psi)[0]
    with pytest.raises(RecursionBlockedError):
        rd.ru_recursive(chain, psi, b)


def test_routes_wigner():
    wig, psi = effective("wigner_friend")
    for b in nonzero_branches(wig, psi):
        comps = rd.compare_routes(wig, psi, b)
        assert [(c.level, c.target, c.step) for c in comps] == [(2, 0, 2), (2, 1, 2)]
        assert all(c.agrees and abs(c.overlap - 1) <= 1e-10 for c in comps)


def test_routes_wdc():
    wdc, psi = effective("wdc")
    for b in nonzero_branches(wdc, psi):
        comps = rd.compare_routes(wdc, psi, b)
        assert [(c.level, c.target, c.step) for c in comps] == [(3, 2, 3), (2, 0, 2), (2, 1, 2)]
        assert all(c.agrees for c in comps)


@pytest.mark.parametrize("name", NAMES)
def test_confirmed_states_all_builtins(name):
    chain, psi = effective(name)
    rep = rd.verify_confirmed_states(chain, psi)
    assert rep.passed, rep.violations


def test_confirmed_states_counts():
    wig, psi = effective("wigner_friend")
    assert rd.verify_confirmed_states(wig, psi).checked == 4
    wdc, psi = effective("wdc")
    assert rd.verify_confirmed_states(wdc, psi).checked == 8


def test_confirmed_states_rejects_domain_violation():
    lay = ChainLayout((build_scenario("wigner_friend").layout[0], apparatus("F", "01"), apparatus("A", ["x"])))
    swap = np.array([[0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=complex)
    f1 = MeasurementFamily(1, {"0": np.diag([1, 0]), "1": np.diag([0, 1])})
    chain = Chain(lay, (f1, MeasurementFamily(2, {"x": np.kron(np.eye(2), swap)})))
    with pytest.raises(InvalidInputError):
        rd.verify_confirmed_states(chain, [R2, R2])


def test_confirmed_states_checker_detects_false_premises(monkeypatch):
    # pretend every factor of the Deutsch chain is confirmed; the checker must object
    dt, psi = effective("deutsch")
    real = rd.confirming_report(dt)
    fake = rd.ConfirmingReport(real.system_point, real.apparatus_points,
                               {k: True for k in real.unchanged})
    monkeypatch.setattr(rd, "confirming_report", lambda chain, tol=1e-9: fake)
    rep = rd.verify_confirmed_states(dt, psi)
    assert not rep.passed
    assert {v.target for v in rep.violations} == {0, 1}


def test_annihilation_rate():
    wdc, psi = effective("wdc")
    P = world_distribution(compose_chain(wdc, psi))
    w = sample_worlds(P, 100_000, 2024)
    rep = rd.pinned_annihilation(wdc, psi, w)
    assert rep.coincide
    assert rep.annihilated == 49801
    assert abs(rep.rate - 0.5) <= 0.01


def test_naive_ru_contradiction():
    wdc, psi = effective("wdc")
    rep = rd.demonstrate_naive_ru_failure(wdc, psi)
    assert rep.grouped_complete and not rep.grouped_pvm
    assert la.equal_up_to_phase(rep.naive_state, psi_sf("+"), 1e-12)
    assert len(rep.overlaps) == 8
    for t, ov in rep.overlaps.items():
        beta = int(t[1])
        assert la.equal_up_to_phase(rep.cf_states[t], ket((2, 3), (beta, beta)), 1e-12)
        assert abs(ov - 0.5) <= 1e-10
    assert rep.contradiction
