import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from qcvv.clifford import (
    CliffordElement,
    clifford_group,
    compose,
    from_unitary,
    invert,
    pauli_from_label,
    pauli_matrix,
    pauli_mul,
    pauli_to_label,
    paulis_commute,
)
from qcvv.errors import ValidationError
from qcvv.qmodel import H, S

from oracles import clifford_closure_order, pauli

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
I2 = np.eye(2)


def test_group_orders_match_matrix_closure():
    # matrix-level BFS modulo global phase, independent of the tableau code
    assert clifford_closure_order([H, S]) == 24
    assert clifford_group(1).order == 24
    assert clifford_group(2).order == 11520


@pytest.mark.slow
def test_two_qubit_order_matches_matrix_closure():
    gens = [np.kron(H, I2), np.kron(I2, H), np.kron(S, I2), np.kron(I2, S), CNOT]
    assert clifford_closure_order(gens) == 11520


def test_unsupported_sizes():
    with pytest.raises(ValidationError):
        clifford_group(3)


def test_pauli_algebra_matches_matrices():
    for a in ("X", "Y", "Z", "XZ", "YY", "ZX", "-XY"):
        for b in ("X", "Y", "Z", "IZ", "XX", "YZ"):
            n = max(len(a.lstrip("-")), len(b))
            la, lb = a.lstrip("-").ljust(n, "I"), b.ljust(n, "I")
            pa = pauli_from_label(("-" if a.startswith("-") else "") + la)
            pb = pauli_from_label(lb)
            lhs = pauli_matrix(pauli_mul(pa, pb), n)
            rhs = pauli_matrix(pa, n) @ pauli_matrix(pb, n)
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)
            commute = np.allclose(rhs, pauli_matrix(pb, n) @ pauli_matrix(pa, n))
            assert paulis_commute(pa, pb) == commute


def test_pauli_labels_round_trip():
    for label in ("XYZ", "IIY", "ZZI"):
        for sign in ("+", "-"):
            p = pauli_from_label(sign + label)
            np.testing.assert_allclose(pauli_matrix(p, 3), (1 if sign == "+" else -1) * pauli(label), atol=1e-12)
            assert pauli_to_label(p, 3) == ((1 if sign == "+" else -1), label)


def test_identity_is_index_zero_and_symplectic():
    g = clifford_group(2)
    assert g.elements[0] == CliffordElement.identity(2)
    np.testing.assert_allclose(g.unitary(0), np.eye(4))


@pytest.mark.parametrize("n", [1, 2])
def test_every_sampled_element_is_consistent(n):
    g = clifford_group(n)
    rng = np.random.default_rng(n)
    for i in g.sample(rng, 300):
        el = g.elements[i]
        assert el.is_symplectic()
        assert el.matches_unitary(g.unitary(i))
        assert from_unitary(g.unitary(i), n) == el


@pytest.mark.parametrize("n", [1, 2])
def test_inverse_composes_to_identity(n):
    g = clifford_group(n)
    rng = np.random.default_rng(100 + n)
    for i in g.sample(rng, 1000):
        i = int(i)
        j = g.inverse(i)
        assert g.compose(j, i) == 0
        assert g.compose(i, j) == 0
        V = g.unitary(j) @ g.unitary(i)
        assert abs(abs(np.trace(V)) - 2**n) < 1e-9


@settings(max_examples=60, deadline=None)
@given(a=st.integers(0, 11519), b=st.integers(0, 11519))
def test_tableau_composition_matches_matrix_product(a, b):
    g = clifford_group(2)
    c = g.compose(a, b)
    V = g.unitary(a) @ g.unitary(b)
    W = g.unitary(c)
    # equal up to a global phase
    overlap = np.trace(W.conj().T @ V) / 4
    assert abs(abs(overlap) - 1) < 1e-9


def test_compose_and_invert_elements_directly():
    g = clifford_group(1)
    h = from_unitary(H, 1)
    s = from_unitary(S, 1)
    hs = compose(h, s)  # H after S
    assert hs.matches_unitary(H @ S)
    assert compose(invert(hs), hs) == CliffordElement.identity(1)
    assert g.lookup(s.then(s)) == g.lookup(from_unitary(np.diag([1, -1]), 1))


def test_from_unitary_rejects_non_clifford():
    T = np.diag([1, np.exp(1j * np.pi / 4)])
    with pytest.raises(ValidationError):
        from_unitary(T, 1)


def test_sampling_is_uniform_chi_square():
    g = clifford_group(1)
    draws = g.sample(np.random.default_rng(20240501), 100_000)
    freq = np.bincount(draws, minlength=24)
    assert chisquare(freq).pvalue > 1e-3
