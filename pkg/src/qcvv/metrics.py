"""
Fidelities and statistical distances between states, distributions and channels.

Fidelity is the squared convention: F(psi, phi) = |<psi|phi>|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .qmodel import DensityMatrix, QuantumChannel

PURE_TOL = 1e-12
# eigenvalues below this fraction of the largest are rounding noise; their
# square roots (~1e-8) would otherwise leak into fidelities
EIG_FLOOR = 1e-13


def _eigh_psd(m: np.ndarray):
    lam, v = np.linalg.eigh((m + m.conj().T) / 2)
    lam[lam < EIG_FLOOR * max(lam[-1], 0.0)] = 0.0
    return np.clip(lam, 0.0, None), v


def _sqrt_trace(m: np.ndarray) -> float:
    """Tr sqrt(m) for a PSD matrix, ignoring rounding-level eigenvalues."""
    lam, _ = _eigh_psd(m)
    return float(np.sum(np.sqrt(lam)))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    lam, v = _eigh_psd(m)
    return (v * np.sqrt(lam)) @ v.conj().T


def fidelity_matrices(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Squared Uhlmann fidelity of two PSD matrices (no validation)."""
    lam_r, v_r = _eigh_psd(rho)
    lam_s, v_s = _eigh_psd(sigma)
    if lam_r[-1] >= np.sum(lam_r) - PURE_TOL:
        psi = v_r[:, -1]
        f = np.real(psi.conj() @ sigma @ psi) * lam_r[-1]
    elif lam_s[-1] >= np.sum(lam_s) - PURE_TOL:
        psi = v_s[:, -1]
        f = np.real(psi.conj() @ rho @ psi) * lam_s[-1]
    else:
        sr = (v_r * np.sqrt(lam_r)) @ v_r.conj().T
        f = _sqrt_trace(sr @ sigma @ sr) ** 2
    return float(min(max(f, 0.0), 1.0))


def fidelity_general(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 without the pure-state shortcut."""
    sr = _sqrtm_psd(rho)
    return _sqrt_trace(sr @ sigma @ sr) ** 2


def _same_dim(a, b) -> None:
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")


def state_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _same_dim(rho, sigma)
    return fidelity_matrices(rho.mat, sigma.mat)


def trace_distance_matrices(a: np.ndarray, b: np.ndarray) -> float:
    diff = a - b
    lam = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return float(min(0.5 * np.sum(np.abs(lam)), 1.0))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _same_dim(rho, sigma)
    return trace_distance_matrices(rho.mat, sigma.mat)


def tvd(p, q, atol: float = 1e-6) -> float:
    """Total variation distance between two probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1) > atol or np.any(v < -atol):
            raise ValidationError(f"{name} is not a probability distribution")
    return float(0.5 * np.sum(np.abs(p - q)))


def process_fidelity(G: QuantumChannel, Gp: QuantumChannel) -> float:
    """Fidelity of the two channels' (unit-trace) Choi states."""
    _same_dim(G, Gp)
    return fidelity_matrices(G.choi, Gp.choi)


def avg_gate_fidelity(f_process: float, d: int) -> float:
    if not 0 <= f_process <= 1:
        raise ValidationError(f"process fidelity {f_process} outside [0, 1]")
    if d < 2:
        raise ValidationError(f"dimension {d} < 2")
    return (d * f_process + 1) / (d + 1)


# ---------------------------------------------------------------------------
# Diamond distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiamondBounds:
    lower: float
    upper: float
    n_restarts: int

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper <= 1):
            raise ValidationError(f"invalid diamond bounds [{self.lower}, {self.upper}]")


class _OutputGap:
    """Trace distance between (G x id)[phi] and (G' x id)[phi] for batches of inputs."""

    def __init__(self, G: QuantumChannel, Gp: QuantumChannel, ancilla_dim: int):
        self.d = G.dim
        self.da = ancilla_dim
        self.k1 = np.stack(G.kraus)
        self.k2 = np.stack(Gp.kraus)

    def n_params(self) -> int:
        return 2 * self.d * self.da

    def states(self, theta: np.ndarray) -> np.ndarray:
        m = self.d * self.da
        phi = theta[..., :m] + 1j * theta[..., m:]
        phi = phi / np.linalg.norm(phi, axis=-1, keepdims=True)
        return phi.reshape(*theta.shape[:-1], self.d, self.da)

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        theta = np.atleast_2d(theta)
        Phi = self.states(theta)  # (b, d, da)
        out = []
        for ks in (self.k1, self.k2):
            psi = np.einsum("kij,bjl->bkil", ks, Phi).reshape(theta.shape[0], ks.shape[0], -1)
            out.append(np.einsum("bki,bkj->bij", psi, psi.conj()))
        diff = out[0] - out[1]
        lam = np.linalg.eigvalsh((diff + np.conj(np.swapaxes(diff, -1, -2))) / 2)
        return np.minimum(0.5 * np.abs(lam).sum(axis=-1), 1.0)


def _refine(f: _OutputGap, theta: np.ndarray, min_step: float = 1e-6, max_evals: int = 200_000):
    """Coordinate-wise perturbation ascent with step halving.

    The objective is scale invariant, so theta is kept at unit norm to stop
    accepted moves from inflating it and silently shrinking the relative step.
    """
    theta = theta / np.linalg.norm(theta)
    best = float(f(theta)[0])
    step = 0.25
    P = theta.size
    evals = 0
    while step >= min_step and evals < max_evals:
        cands = np.repeat(theta[None, :], 2 * P, axis=0)
        cands[np.arange(P), np.arange(P)] += step
        cands[P + np.arange(P), np.arange(P)] -= step
        vals = f(cands)
        evals += 2 * P
        i = int(np.argmax(vals))
        if vals[i] > best + 1e-13:
            theta, best = cands[i] / np.linalg.norm(cands[i]), float(vals[i])
        else:
            step /= 2
    return theta, best


def _search(f: _OutputGap, starts: list[np.ndarray], n_restarts: int, seed: int):
    best_theta, best = None, -1.0
    candidates = list(starts)
    for i in range(n_restarts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        candidates.append(rng.standard_normal(f.n_params()))
    for theta0 in candidates:
        theta, val = _refine(f, np.asarray(theta0, dtype=float))
        if val > best:
            best_theta, best = theta, val
    return best_theta, best


def diamond_distance_bounds(
    G: QuantumChannel,
    Gp: QuantumChannel,
    n_restarts: int = 16,
    seed: int = 0,
    ancilla: bool = True,
) -> DiamondBounds:
    """Interval containing the diamond distance (half the diamond norm of G - G').

    The lower bound is the best ancilla-assisted trace distance found by
    randomized local search over pure inputs; the upper bound is
    ``min(1, d * trace_distance(Choi(G), Choi(G')))``. With ``ancilla=False``
    the search is restricted to unentangled inputs on the system alone.
    """
    _same_dim(G, Gp)
    if n_restarts < 1:
        raise ValidationError("n_restarts must be >= 1")
    d = G.dim
    upper = min(1.0, d * trace_distance_matrices(G.choi, Gp.choi))

    f_sys = _OutputGap(G, Gp, 1)
    e0 = np.zeros(f_sys.n_params())
    e0[0] = 1.0
    theta_sys, lower_sys = _search(f_sys, [e0], n_restarts, seed)
    if not ancilla:
        lower = lower_sys
    else:
        f = _OutputGap(G, Gp, d)
        m = d * d
        bell = np.zeros(2 * m)
        bell[: m] = np.eye(d).reshape(-1)
        # best system-only input, tensored with ancilla |0>
        prod = np.zeros(2 * m)
        v = theta_sys[:d] + 1j * theta_sys[d:]
        prod_c = np.zeros((d, d), dtype=complex)
        prod_c[:, 0] = v
        prod[:m] = prod_c.real.reshape(-1)
        prod[m:] = prod_c.imag.reshape(-1)
        _, lower = _search(f, [bell, prod], n_restarts, seed)
        lower = max(lower, lower_sys)
    lower = float(min(max(lower, 0.0), 1.0))
    upper = max(upper, lower)  # only bites at rounding level
    return DiamondBounds(lower=lower, upper=float(upper), n_restarts=n_restarts)
