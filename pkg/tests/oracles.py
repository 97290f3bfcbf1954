"""
Independent reference computations used as test oracles.

Nothing here imports the package: each quantity is recomputed from its
definition with plain numpy/scipy so that convention slips in the library
(vectorization order, Choi normalization, Pauli ordering) show up as mismatches.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, PAULI[ch])
    return out


def apply_kraus(kraus, rho):
    return sum(K @ rho @ K.conj().T for K in kraus)


def superop_by_action(kraus) -> np.ndarray:
    """Column j is the column-stacked image of the j-th column-stacked matrix unit."""
    d = kraus[0].shape[0]
    S = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d * d):
        unit = np.zeros(d * d, dtype=complex)
        unit[j] = 1
        E = unit.reshape(d, d, order="F")
        S[:, j] = apply_kraus(kraus, E).reshape(-1, order="F")
    return S


def choi_by_definition(kraus) -> np.ndarray:
    """(G x id)(|Psi><Psi|) with |Psi> = sum_i |i>|i> / sqrt(d), system factor first."""
    d = kraus[0].shape[0]
    psi = np.eye(d).reshape(-1) / np.sqrt(d)
    P = np.outer(psi, psi.conj())
    return sum(np.kron(K, np.eye(d)) @ P @ np.kron(K, np.eye(d)).conj().T for K in kraus)


def ptm_by_trace(kraus, n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    labels = ["".join(t) for t in itertools.product("IXYZ", repeat=n_qubits)]
    R = np.zeros((d * d, d * d))
    for i, a in enumerate(labels):
        for j, b in enumerate(labels):
            R[i, j] = np.real(np.trace(pauli(a) @ apply_kraus(kraus, pauli(b)))) / d
    return R


def fidelity_sqrtm(rho, sigma) -> float:
    s = scipy.linalg.sqrtm(rho)
    return float(np.real(np.trace(scipy.linalg.sqrtm(s @ sigma @ s))) ** 2)


def trace_norm_distance(rho, sigma) -> float:
    return float(0.5 * np.sum(np.linalg.svd(rho - sigma, compute_uv=False)))


def depolarizing_kraus(q: float):
    return [np.sqrt(1 - 3 * q / 4) * PAULI["I"]] + [np.sqrt(q / 4) * PAULI[c] for c in "XYZ"]


def amplitude_damping_kraus(gamma: float):
    return [
        np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def _phase_key(U: np.ndarray, decimals: int = 8) -> tuple:
    flat = U.reshape(-1)
    k = int(np.argmax(np.abs(flat) > 1e-6))
    V = flat * (abs(flat[k]) / flat[k])
    V = np.round(V, decimals) + 0.0
    return tuple(np.round(V.real, decimals)) + tuple(np.round(V.imag, decimals))


def clifford_closure_order(generators) -> int:
    """Size of the group generated by ``generators`` modulo global phase (matrix BFS)."""
    d = generators[0].shape[0]
    seen = {_phase_key(np.eye(d, dtype=complex))}
    frontier = [np.eye(d, dtype=complex)]
    while frontier:
        nxt = []
        for U in frontier:
            for g in generators:
                V = g @ U
                key = _phase_key(V)
                if key not in seen:
                    seen.add(key)
                    nxt.append(V)
        frontier = nxt
    return len(seen)


def bloch_density(r) -> np.ndarray:
    x, y, z = r
    return 0.5 * (PAULI["I"] + x * PAULI["X"] + y * PAULI["Y"] + z * PAULI["Z"])


def pauli_basis_loglik(counts, r) -> float:
    """Log-likelihood of X/Y/Z-basis counts ((n+, n-) per axis) at Bloch vector r."""
    ll = 0.0
    for (n_plus, n_minus), c in zip(counts, r):
        p = (1 + c) / 2
        for n, q in ((n_plus, p), (n_minus, 1 - p)):
            if n:
                if q <= 0:
                    return -np.inf
                ll += n * np.log(q)
    return ll


def bloch_grid(spacing: float = 0.01):
    ticks = np.arange(-1, 1 + spacing / 2, spacing)
    X, Y, Z = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return pts[np.sum(pts**2, axis=1) <= 1 + 1e-12]


def rb_survival_depolarizing(q: float, m: int) -> float:
    """Single-qubit survival with depolarizing q after each of m random gates and the inverse."""
    return 0.5 + 0.5 * (1 - q) ** (m + 1)


def heavy_set_by_sorting(p) -> set[int]:
    p = np.asarray(p)
    s = np.sort(p)
    n = len(s)
    med = s[n // 2] if n % 2 else 0.5 * (s[n // 2 - 1] + s[n // 2])
    return {i for i, x in enumerate(p) if x > med}


def pauli_basis_loglik_grid(counts, pts) -> np.ndarray:
    """Vectorized pauli_basis_loglik over rows of Bloch vectors."""
    ll = np.zeros(len(pts))
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis, (n_plus, n_minus) in enumerate(counts):
            p = (1 + pts[:, axis]) / 2
            for n, q in ((n_plus, p), (n_minus, 1 - p)):
                if n:
                    ll += np.where(q > 0, n * np.log(np.where(q > 0, q, 1)), -np.inf)
    return ll
