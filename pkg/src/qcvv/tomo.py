"""
State, process and measurement tomography.

Estimators work on the vectorized picture: probabilities are
``M @ vec(rho)`` with rows ``<<E_k|``. Linear inversion uses the
Moore-Penrose pseudoinverse of the (overcomplete) design; maximum
likelihood runs projected gradient ascent on the physical set.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, ValidationError
from .gates import PREP_FIDUCIALS, circuit_unitary, rotation_labels
from .qmodel import DensityMatrix, QuantumChannel, choi_to_superop, superop_to_choi, unvec, vec
from .simcore import Circuit, CountData

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
PHYSICAL_TOL = 1e-6


@dataclass(frozen=True)
class TomographyDesign:
    """Fiducial circuits and the linear map from model to outcome probabilities.

    ``effects`` lists every measured effect in row order (measurement
    fiducial major, outcome minor); ``prep_states`` are the ideal states
    produced by ``prep_fiducials`` (process and measurement designs).
    """

    kind: str
    n_qubits: int
    meas_fiducials: tuple[Circuit, ...]
    effects: tuple[np.ndarray, ...]
    prep_fiducials: tuple[Circuit, ...] = ()
    prep_states: tuple[np.ndarray, ...] = ()
    target: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("state", "process", "measurement"):
            raise ValidationError(f"unknown tomography kind {self.kind!r}")
        d2 = 4**self.n_qubits
        if self.kind in ("state", "process"):
            r = int(np.linalg.matrix_rank(self.design_matrix, tol=RANK_TOL))
            if r < d2:
                raise ValidationError(f"measurement effects span rank {r} < {d2}")
        if self.kind in ("process", "measurement"):
            r = int(np.linalg.matrix_rank(self.prep_matrix, tol=RANK_TOL))
            if r < d2:
                raise ValidationError(f"preparation states span rank {r} < {d2}")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def outcomes_per_setting(self) -> int:
        return 2**self.n_qubits

    @property
    def design_matrix(self) -> np.ndarray:
        """M with rows <<E_k| (row count = number of effects)."""
        if not self.effects:
            return np.zeros((0, 4**self.n_qubits), dtype=complex)
        return np.stack([vec(E).conj() for E in self.effects])

    @property
    def prep_matrix(self) -> np.ndarray:
        """Columns |rho_j>>."""
        if not self.prep_states:
            return np.zeros((4**self.n_qubits, 0), dtype=complex)
        return np.stack([vec(r) for r in self.prep_states], axis=1)

    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.design_matrix, tol=RANK_TOL))

    def condition_number(self) -> float:
        return float(np.linalg.cond(self.design_matrix))

    def circuits(self, prefix: Sequence[str] = ()) -> list[Circuit]:
        """Executable circuits in data order.

        State designs: ``prefix`` then each measurement fiducial. Process
        designs: each preparation fiducial, then ``target``, then each
        measurement fiducial (preparation major).
        """
        if self.kind == "state":
            return [
                Circuit(self.n_qubits, tuple(prefix) + m.layers, m.circuit_id) for m in self.meas_fiducials
            ]
        if self.kind == "process":
            return [
                Circuit(self.n_qubits, p.layers + tuple(self.target) + m.layers, f"{p.circuit_id}|{m.circuit_id}")
                for p in self.prep_fiducials
                for m in self.meas_fiducials
            ]
        return [Circuit(self.n_qubits, p.layers, p.circuit_id) for p in self.prep_fiducials]


def _meas_settings(n_qubits: int):
    for setting in itertools.product("XYZ", repeat=n_qubits):
        pauli = "".join(setting)
        yield pauli, Circuit(n_qubits, tuple(rotation_labels(pauli)), f"meas:{pauli}")


def _setting_effects(circuit: Circuit, n_qubits: int) -> list[np.ndarray]:
    V = circuit_unitary(circuit.layers, n_qubits)
    d = 2**n_qubits
    out = []
    for k in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[k, k] = 1
        out.append(V.conj().T @ e @ V)
    return out


def _meas_part(n_qubits: int):
    fids, effects = [], []
    for _, c in _meas_settings(n_qubits):
        fids.append(c)
        effects += _setting_effects(c, n_qubits)
    return tuple(fids), tuple(effects)


def standard_state_design(n_qubits: int) -> TomographyDesign:
    """Pauli-basis measurements (X, Y, Z per qubit): 3^n settings, 6^n effects."""
    if not 1 <= n_qubits <= 3:
        raise ValidationError(f"state tomography supports 1..3 qubits, got {n_qubits}")
    fids, effects = _meas_part(n_qubits)
    return TomographyDesign("state", n_qubits, fids, effects)


def prep_fiducial_circuits(n_qubits: int, names: Sequence[str] = tuple(PREP_FIDUCIALS)) -> list[tuple[Circuit, np.ndarray]]:
    d = 2**n_qubits
    zero = np.zeros((d, d), dtype=complex)
    zero[0, 0] = 1
    out = []
    for combo in itertools.product(names, repeat=n_qubits):
        labels = [f"{g}:{q}" for q, name in enumerate(combo) for g in PREP_FIDUCIALS[name]]
        U = circuit_unitary(labels, n_qubits)
        out.append((Circuit(n_qubits, tuple(labels), "prep:" + ",".join(combo)), U @ zero @ U.conj().T))
    return out


def standard_process_design(
    n_qubits: int, target: Sequence[str] = ("I",), prep_names: Sequence[str] = tuple(PREP_FIDUCIALS)
) -> TomographyDesign:
    """Preparations of |0>, |1>, |+>, |+i> per qubit, with state-tomography readout."""
    if not 1 <= n_qubits <= 2:
        raise ValidationError(f"process tomography supports 1..2 qubits, got {n_qubits}")
    unknown = [p for p in prep_names if p not in PREP_FIDUCIALS]
    if unknown:
        raise ValidationError(f"unknown preparation fiducial {unknown[0]!r}")
    preps = prep_fiducial_circuits(n_qubits, prep_names)
    fids, effects = _meas_part(n_qubits)
    return TomographyDesign(
        "process",
        n_qubits,
        fids,
        effects,
        prep_fiducials=tuple(c for c, _ in preps),
        prep_states=tuple(r for _, r in preps),
        target=tuple(target),
    )


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateEstimate:
    rho_hat: np.ndarray
    method: str
    physical: bool
    loglikelihood: float | None = None
    iterations: int = 0

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.rho_hat)[0])

    def density(self, atol: float = 1e-6) -> DensityMatrix:
        return DensityMatrix(self.rho_hat, atol=atol)


@dataclass(frozen=True)
class ProcessEstimate:
    superop_hat: np.ndarray
    method: str
    physical: bool
    loglikelihood: float | None = None
    iterations: int = 0

    @property
    def choi(self) -> np.ndarray:
        return superop_to_choi(self.superop_hat)

    @property
    def tp_error(self) -> float:
        d = int(round(np.sqrt(self.superop_hat.shape[0])))
        vid = vec(np.eye(d))
        return float(np.max(np.abs(vid.conj() @ self.superop_hat - vid.conj())))

    def channel(self, atol: float = 1e-6) -> QuantumChannel:
        return QuantumChannel(superop=self.superop_hat, atol=atol)

    @property
    def ptm(self) -> np.ndarray:
        return QuantumChannel(superop=self.superop_hat, check=False).ptm


@dataclass(frozen=True)
class PovmEstimate:
    effects: tuple[np.ndarray, ...]
    negative: tuple[bool, ...]

    @property
    def physical(self) -> bool:
        return not any(self.negative)


def _stack_data(data: Sequence[CountData], n_settings: int, n_out: int, exact_ok=True):
    if len(data) != n_settings:
        raise ValidationError(f"expected {n_settings} count records, got {len(data)}")
    freqs, weights = [], []
    for cd in data:
        if not cd.exact and cd.shots <= 0:
            raise ValidationError(f"{cd.circuit_id}: no shots recorded")
        freqs.append(cd.frequencies(n_out))
        weights.append(cd.weights(n_out))
    return np.concatenate(freqs), np.concatenate(weights)


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def linear_inversion_state(design: TomographyDesign, data: Sequence[CountData]) -> StateEstimate:
    """rho = unvec(M^+ p), Hermitized then trace-renormalized."""
    if design.kind != "state":
        raise ValidationError("linear_inversion_state needs a state design")
    r = design.rank()
    if r < 4**design.n_qubits:
        raise ValidationError(f"design rank {r} < {4 ** design.n_qubits}")
    p, _ = _stack_data(data, len(design.meas_fiducials), design.outcomes_per_setting)
    rho = _hermitize(unvec(np.linalg.pinv(design.design_matrix) @ p, design.dim))
    rho = rho / np.trace(rho).real
    physical = bool(np.linalg.eigvalsh(rho)[0] >= -PHYSICAL_TOL)
    return StateEstimate(rho, "linear_inversion", physical)


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------


def _simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1
    ind = np.arange(1, v.size + 1)
    rho_i = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho_i] / (rho_i + 1)
    return np.maximum(v - theta, 0)


def project_density(m: np.ndarray) -> np.ndarray:
    """Closest density matrix in Frobenius norm (eigenvalues clipped and renormalized)."""
    lam, v = np.linalg.eigh(_hermitize(m))
    lam = _simplex_projection(lam)
    return (v * lam) @ v.conj().T


def _loglik(p: np.ndarray, w: np.ndarray) -> float:
    mask = w > 0
    if np.any(p[mask] <= 0):
        return -np.inf
    return float(np.sum(w[mask] * np.log(p[mask])))


def _ascent(x0, probs_fn, grad_fn, project, w, tol, max_iter, what):
    """Monotone projected gradient ascent with backtracking step control."""
    x = x0
    ll = _loglik(probs_fn(x), w)
    if not np.isfinite(ll):
        raise ValidationError(f"{what}: starting point assigns zero probability to observed data")
    g = grad_fn(x)
    t = 1.0 / max(np.linalg.norm(g), 1e-300)
    quiet = 0
    for it in range(1, max_iter + 1):
        while True:
            cand = project(x + t * g)
            ll_c = _loglik(probs_fn(cand), w)
            if ll_c >= ll:
                break
            t /= 2
            if t < 1e-300:
                return x, ll, it
        gain = ll_c - ll
        assert gain >= 0, "log-likelihood decreased"
        x, ll = cand, ll_c
        if gain <= tol * max(abs(ll), 1.0):
            quiet += 1
            if quiet >= 10:
                return x, ll, it
        else:
            quiet = 0
        g = grad_fn(x)
        t *= 2
    raise ConvergenceError(f"{what}: no convergence after {max_iter} iterations", best=x, loglikelihood=ll,
                           iterations=max_iter)


def state_loglikelihood(design: TomographyDesign, data: Sequence[CountData], rho: np.ndarray) -> float:
    _, w = _stack_data(data, len(design.meas_fiducials), design.outcomes_per_setting)
    return _loglik(np.real(design.design_matrix @ vec(rho)), w)


def mle_state(
    design: TomographyDesign, data: Sequence[CountData], tol: float = 1e-10, max_iter: int = 20000
) -> StateEstimate:
    """Physical density matrix maximizing sum_k n_k log Tr(E_k rho).

    Starts from the density-matrix projection of the linear-inversion estimate
    (mixed slightly toward I/d only if that start gives zero probability to an
    observed outcome), so the result is never less likely than that projection.
    """
    li = linear_inversion_state(design, data)
    _, w = _stack_data(data, len(design.meas_fiducials), design.outcomes_per_setting)
    M = design.design_matrix
    d = design.dim

    def probs(rho):
        return np.real(M @ vec(rho))

    def grad(rho):
        p = probs(rho)
        ratio = np.divide(w, p, out=np.zeros_like(w), where=w > 0)
        return _hermitize(unvec(M.conj().T @ ratio, d))

    start = project_density(li.rho_hat)
    eps = 1e-3
    while not np.isfinite(_loglik(probs(start), w)):
        start = (1 - eps) * project_density(li.rho_hat) + eps * np.eye(d) / d
        eps *= 10
    rho, ll, it = _ascent(start, probs, grad, project_density, w, tol, max_iter, "state MLE")
    return StateEstimate(rho, "mle", True, ll, it)


# ---------------------------------------------------------------------------
# Process tomography
# ---------------------------------------------------------------------------


def _process_probs_matrix(design, data) -> tuple[np.ndarray, np.ndarray]:
    """Frequencies and weights arranged as (effect row, prep column)."""
    n_set = len(design.meas_fiducials)
    n_out = design.outcomes_per_setting
    n_prep = len(design.prep_fiducials)
    if len(data) != n_set * n_prep:
        raise ValidationError(f"expected {n_set * n_prep} count records, got {len(data)}")
    P = np.zeros((n_set * n_out, n_prep))
    W = np.zeros_like(P)
    for j in range(n_prep):
        f, w = _stack_data(data[j * n_set:(j + 1) * n_set], n_set, n_out)
        P[:, j] = f
        W[:, j] = w
    return P, W


def _partial_trace_system(J: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("iaib->ab", J.reshape(d, d, d, d))


def _tp_project_choi(J: np.ndarray, d: int) -> np.ndarray:
    """Orthogonal projection onto Tr_system J = I/d."""
    delta = _partial_trace_system(J, d) - np.eye(d) / d
    return J - np.kron(np.eye(d), delta) / d


def _psd_clip(J: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh(_hermitize(J))
    return (v * np.clip(lam, 0, None)) @ v.conj().T


def project_cptp_choi(J: np.ndarray, d: int, tol: float = 1e-12, max_iter: int = 100000) -> np.ndarray:
    """Dykstra alternating projection onto {J >= 0, Tr_system J = I/d}; result is exactly PSD."""
    x = _hermitize(J)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    y = x
    for _ in range(max_iter):
        y = _psd_clip(x + p)
        p = x + p - y
        x_new = _tp_project_choi(y + q, d)
        q = y + q - x_new
        change = np.max(np.abs(x_new - x))
        x = x_new
        if np.max(np.abs(x - y)) < tol and change < tol:
            break
    return y


def linear_inversion_process(design: TomographyDesign, data: Sequence[CountData]) -> ProcessEstimate:
    """G = M_E^+ P M_rho^+, made Hermiticity preserving and trace preserving."""
    if design.kind != "process":
        raise ValidationError("linear_inversion_process needs a process design")
    P, _ = _process_probs_matrix(design, data)
    G = np.linalg.pinv(design.design_matrix) @ P @ np.linalg.pinv(design.prep_matrix)
    d = design.dim
    J = _tp_project_choi(_hermitize(superop_to_choi(G)), d)
    physical = bool(np.linalg.eigvalsh(J)[0] >= -PHYSICAL_TOL)
    return ProcessEstimate(choi_to_superop(J), "linear_inversion", physical)


def _process_effect_ops(design: TomographyDesign) -> np.ndarray:
    """A[(k, j)] with p_kj = d Tr(J A) = <<A|J>> * d, flattened for vectorized evaluation."""
    d = design.dim
    ops = np.array([[np.kron(E, r.T) for r in design.prep_states] for E in design.effects])
    return ops.reshape(-1, d * d, d * d) * d


def process_loglikelihood(design: TomographyDesign, data: Sequence[CountData], superop: np.ndarray) -> float:
    _, W = _process_probs_matrix(design, data)
    A = _process_effect_ops(design)
    J = superop_to_choi(superop)
    p = np.real(np.einsum("kab,ba->k", A, J))
    return _loglik(p, W.reshape(-1))


def mle_process(
    design: TomographyDesign, data: Sequence[CountData], tol: float = 1e-10, max_iter: int = 20000
) -> ProcessEstimate:
    """CPTP map maximizing the likelihood, parameterized by its Choi matrix."""
    li = linear_inversion_process(design, data)
    _, W = _process_probs_matrix(design, data)
    w = W.reshape(-1)
    A = _process_effect_ops(design)
    d = design.dim

    def probs(J):
        return np.real(np.einsum("kab,ba->k", A, J))

    def grad(J):
        p = probs(J)
        ratio = np.divide(w, p, out=np.zeros_like(w), where=w > 0)
        return _hermitize(np.einsum("k,kab->ab", ratio, A))

    def project(J):
        return project_cptp_choi(J, d)

    J0 = superop_to_choi(li.superop_hat)
    start = project(J0)
    eps = 1e-3
    while not np.isfinite(_loglik(probs(start), w)):
        start = project((1 - eps) * start + eps * np.eye(d * d) / (d * d))
        eps *= 10
    J, ll, it = _ascent(start, probs, grad, project, w, tol, max_iter, "process MLE")
    return ProcessEstimate(choi_to_superop(J), "mle", True, ll, it)


# ---------------------------------------------------------------------------
# Measurement tomography
# ---------------------------------------------------------------------------


def measurement_tomography(preps: Sequence[DensityMatrix], data: Sequence[CountData]) -> PovmEstimate:
    """Per-effect linear inversion from known preparations, then completeness projection."""
    if len(preps) != len(data):
        raise ValidationError(f"{len(preps)} preparations but {len(data)} count records")
    if not preps:
        raise ValidationError("no preparations given")
    d = preps[0].dim
    R = np.stack([p.superket() for p in preps], axis=1)
    r = int(np.linalg.matrix_rank(R, tol=RANK_TOL))
    if r < d * d:
        raise ValidationError(f"preparations span rank {r} < {d * d}")
    n_out = max(
        (len(cd.probs) if cd.exact else max(cd.counts, default=-1) + 1) for cd in data
    )
    F = np.stack([cd.frequencies(n_out) for cd in data], axis=1)  # (effect, prep)
    rows = F @ np.linalg.pinv(R)  # rows are <<E_k|
    effects = [_hermitize(unvec(row.conj(), d)) for row in rows]
    defect = (np.eye(d) - sum(effects)) / len(effects)
    effects = [e + defect for e in effects]
    negative = tuple(bool(np.linalg.eigvalsh(e)[0] < -PHYSICAL_TOL) for e in effects)
    return PovmEstimate(tuple(effects), negative)
