import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldchain import linalg as la
from worldchain.errors import InvalidInputError
from worldchain.scenarios import build_scenario
from worldchain.spaces import (
    ChainLayout,
    apparatus,
    embed_operator,
    final_subspace_projector,
    joint_projector,
    system,
)

from oracles import R2, ket


def wigner_layout():
    return ChainLayout((system("S", 2), apparatus("F", "01"), apparatus("W", "012")))


def wdc_layout():
    return build_scenario("wdc").layout


def test_apparatus_basis_convention():
    w = apparatus("W", ["0", "1", "2"])
    assert w.dim == 4 and w.init_index == 3
    assert la.approx_eq(w.final_state("1"), la.basis(4, 1))
    assert la.approx_eq(w.init_state, la.basis(4, 3))


def test_factor_invariants():
    with pytest.raises(InvalidInputError):
        apparatus("F", [])
    with pytest.raises(InvalidInputError):
        apparatus("F", ["0", "0"])
    with pytest.raises(InvalidInputError):
        apparatus("F", ["0", "1"], finals=[la.basis(3, 0), la.basis(3, 0)])
    with pytest.raises(InvalidInputError):
        apparatus("F", ["0", "1"], finals=[la.basis(3, 0), la.basis(3, 2)], init_index=2)
    with pytest.raises(InvalidInputError):
        ChainLayout((apparatus("F", "01"), system("S", 2)))
    with pytest.raises(InvalidInputError):
        ChainLayout((system("S", 2), system("T", 2)))


def test_custom_final_states():
    finals = [np.array([R2, R2, 0]), np.array([R2, -R2, 0])]
    f = apparatus("F", ["a", "b"], finals=finals, init_index=2)
    assert la.approx_eq(f.final_state("b"), finals[1])


def test_embed_at_front():
    lay = wigner_layout()
    u = np.arange(36).reshape(6, 6).astype(complex)
    assert la.approx_eq(embed_operator(lay, u), np.kron(u, np.eye(4)))


def test_embed_identity():
    lay = wigner_layout()
    assert la.approx_eq(embed_operator(lay, np.eye(2)), np.eye(24))


def test_embed_middle_slot_acts_slotwise():
    lay = wigner_layout()
    u = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1]], dtype=complex)
    big = embed_operator(lay, u, 1)
    dims = (2, 3, 4)
    for s in range(2):
        for f in range(3):
            for w in range(4):
                out = big @ ket(dims, (s, f, w))
                g = int(np.argmax(np.abs(u[:, f])))
                assert la.approx_eq(out, ket(dims, (s, g, w)))


def test_embed_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        embed_operator(wigner_layout(), np.eye(5))


def test_final_projector_wigner():
    lay = wigner_layout()
    p = final_subspace_projector(lay, "F", "0")
    expected = np.kron(np.kron(np.eye(2), np.diag([1, 0, 0])), np.eye(4))
    assert la.approx_eq(p, expected)
    assert la.approx_eq(p @ p, p)


def test_final_projector_trace():
    lay = wdc_layout()
    for i in (1, 2, 3):
        comp = int(np.prod([d for j, d in enumerate(lay.dims) if j != i]))
        for m in lay[i].outcomes:
            assert np.trace(final_subspace_projector(lay, i, m)).real == pytest.approx(comp)


def test_final_projector_unknown_outcome():
    with pytest.raises(InvalidInputError):
        final_subspace_projector(wigner_layout(), "F", "7")
    with pytest.raises(InvalidInputError):
        final_subspace_projector(wigner_layout(), 0, "0")


def test_joint_projector_empty_is_identity():
    assert la.approx_eq(joint_projector(wigner_layout(), []), np.eye(24))


def test_joint_projector_rejects_duplicates():
    with pytest.raises(InvalidInputError):
        joint_projector(wigner_layout(), [(1, "0"), (1, "1")])


def test_joint_projector_wdc_pin_w():
    lay = wdc_layout()
    p = joint_projector(lay, [("W", "1")])
    expected = np.kron(np.kron(np.eye(6), np.diag([0, 1, 0, 0])), np.eye(3))
    assert la.approx_eq(p, expected)


def test_two_pins_annihilate_mismatched_virtual_state():
    # state after W in the Wigner-Deutsch chain: sum_l |l>|Phi^F[l]>|Phi^W[l]>/sqrt2, D at init
    dims = (2, 3, 4, 3)
    v = R2 * (ket(dims, (0, 0, 0, 2)) + ket(dims, (1, 1, 1, 2)))
    lay = wdc_layout()
    assert la.is_zero(joint_projector(lay, [(1, "0"), (2, "1")]) @ v)
    assert la.norm(joint_projector(lay, [(1, "1"), (2, "1")]) @ v) == pytest.approx(R2)


pins_strategy = st.dictionaries(st.sampled_from([1, 2, 3]), st.integers(0, 5), max_size=3)


def _pins(d):
    lay = wdc_layout()
    return [(i, lay[i].outcomes[k % len(lay[i].outcomes)]) for i, k in sorted(d.items())]


@settings(max_examples=40, deadline=None)
@given(pins_strategy)
def test_joint_projector_is_projector(d):
    p = joint_projector(wdc_layout(), _pins(d))
    assert la.approx_eq(p @ p, p, 1e-12)
    assert la.approx_eq(p, p.conj().T, 1e-12)


@settings(max_examples=40, deadline=None)
@given(pins_strategy, pins_strategy)
def test_joint_projector_disjoint_union(a, b):
    b = {k: v for k, v in b.items() if k not in a}
    lay = wdc_layout()
    both = joint_projector(lay, _pins({**a, **b}))
    assert la.approx_eq(both, joint_projector(lay, _pins(a)) @ joint_projector(lay, _pins(b)), 1e-12)


def test_distinct_outcomes_orthogonal():
    lay = wdc_layout()
    for i in (1, 2, 3):
        for m in lay[i].outcomes:
            for m2 in lay[i].outcomes:
                if m != m2:
                    prod = final_subspace_projector(lay, i, m) @ final_subspace_projector(lay, i, m2)
                    assert la.approx_eq(prod, np.zeros_like(prod), 1e-12)


def test_layout_json_round_trip():
    lay = wdc_layout()
    data = json.loads(json.dumps(lay.to_json()))
    assert data["factors"][2] == {"label": "W", "dim": 4, "role": "apparatus",
                                  "outcomes": ["0", "1", "2"], "init_index": 3}
    back = ChainLayout.from_json(data)
    assert back.dims == lay.dims and [f.outcomes for f in back.factors] == [f.outcomes for f in lay.factors]


def test_layout_json_rejects_unknown_keys():
    data = wdc_layout().to_json()
    data["factors"][1]["colour"] = "red"
    with pytest.raises(InvalidInputError, match=r"factors\[1\]"):
        ChainLayout.from_json(data)


def test_layout_json_rejects_wrong_dim():
    data = wdc_layout().to_json()
    data["factors"][1]["dim"] = 5
    with pytest.raises(InvalidInputError, match="len\\(outcomes\\)\\+1"):
        ChainLayout.from_json(data)
