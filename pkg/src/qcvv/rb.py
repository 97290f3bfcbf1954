"""
Standard Clifford randomized benchmarking: sequence generation, simulated
execution, and the exponential decay fit F(m) = A p^m + B.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .clifford import CliffordGroup, clifford_group
from .errors import ValidationError
from .qmodel import GateSet
from .simcore import Circuit, CountData, run_design

CONSTANT_TOL = 1e-12


@dataclass(frozen=True)
class RbDesign:
    n_qubits: int
    lengths: tuple[int, ...]
    k_sequences: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(int(m) for m in self.lengths))
        if self.n_qubits not in (1, 2):
            raise ValidationError(f"RB supports 1 or 2 qubits, got {self.n_qubits}")
        if not self.lengths or min(self.lengths) < 1:
            raise ValidationError("sequence lengths must be >= 1")
        if any(b <= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ValidationError(f"sequence lengths must be strictly increasing: {self.lengths}")
        if self.k_sequences < 2:
            raise ValidationError(f"need at least 2 sequences per length, got {self.k_sequences}")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def circuit_lengths(self) -> list[int]:
        """Sequence length m of each circuit, in circuit order."""
        return [m for m in self.lengths for _ in range(self.k_sequences)]


def sample_rb_sequences(design: RbDesign, group: CliffordGroup | None = None) -> list[Circuit]:
    """m uniformly random Cliffords closed by the exact inverse, for every (m, repetition)."""
    group = group if group is not None else clifford_group(design.n_qubits)
    if group.n_qubits != design.n_qubits:
        raise ValidationError("Clifford group and design disagree on qubit count")
    rng = np.random.default_rng(design.seed)
    out = []
    for m in design.lengths:
        for j in range(design.k_sequences):
            idx = [int(i) for i in group.sample(rng, m)]
            inv = group.inverse(group.lookup(group.compose_sequence(idx)))
            labels = tuple(group.label(i) for i in idx + [inv])
            out.append(Circuit(design.n_qubits, labels, f"rb:m{m}:s{j}"))
    return out


def survival_outcome(gs: GateSet) -> int:
    """Readout effect most likely for the native preparation with no gates applied."""
    probs = np.real(gs.meas.matrix() @ gs.prep.superket())
    return int(np.argmax(probs))


@dataclass(frozen=True)
class RbPoint:
    m: int
    mean: float
    sem: float
    k: int


def rb_points_from_counts(
    design: RbDesign, data: Sequence[CountData], survival_index: int = 0
) -> list[RbPoint]:
    """Mean survival frequency per length, with the standard error across sequences."""
    lengths = design.circuit_lengths()
    if len(data) != len(lengths):
        raise ValidationError(f"expected {len(lengths)} count records, got {len(data)}")
    n_out = design.dim
    by_m: dict[int, list[float]] = {m: [] for m in design.lengths}
    for m, cd in zip(lengths, data):
        by_m[m].append(float(cd.frequencies(n_out)[survival_index]))
    points = []
    for m in design.lengths:
        f = np.array(by_m[m])
        points.append(RbPoint(m, float(f.mean()), float(f.std(ddof=1) / np.sqrt(f.size)), int(f.size)))
    return points


def run_rb(
    design: RbDesign,
    gs: GateSet,
    shots: int,
    seed: int,
    exact: bool = False,
    workers: int | None = None,
) -> list[RbPoint]:
    """Simulate every sequence on ``gs`` and average survival per length."""
    if gs.n_qubits != design.n_qubits:
        raise ValidationError("gate set and design disagree on qubit count")
    circuits = sample_rb_sequences(design)
    data = run_design(gs, circuits, shots, seed, exact=exact, workers=workers)
    return rb_points_from_counts(design, data, survival_outcome(gs))


def rb_number(p: float, d: int) -> float:
    """Average gate error (d - 1)(1 - p)/d."""
    if not 0 <= p <= 1:
        raise ValidationError(f"decay parameter p={p} outside [0, 1]")
    if d < 2:
        raise ValidationError(f"dimension {d} < 2")
    return (d - 1) * (1 - p) / d


@dataclass(frozen=True)
class DecayFit:
    A: float
    B: float
    p: float
    r: float
    stderr_p: float
    n_points: int
    d: int = 2


def _model(A, B, p, m):
    return A * p**m + B


def fit_decay(points, d: int = 2, sigmas: Sequence[float] | None = None) -> DecayFit:
    """Bounded least-squares fit of F(m) = A p^m + B.

    ``points`` are ``(m, F)`` pairs or :class:`RbPoint`. Parameters are kept
    in the box p, A, B in [0, 1] with A + B <= 1. Without ``sigmas`` the fit
    is unweighted and the covariance is scaled by the residual variance;
    with ``sigmas`` it is weighted and the covariance is absolute.
    """
    pts = [(p.m, p.mean) if isinstance(p, RbPoint) else (p[0], p[1]) for p in points]
    m = np.array([float(a) for a, _ in pts])
    F = np.array([float(b) for _, b in pts])
    if len(set(m.tolist())) < 3:
        raise ValidationError(f"need at least 3 distinct lengths, got {len(set(m.tolist()))}")
    if not np.all(np.isfinite(F)):
        raise ValidationError("survival values must be finite")
    if sigmas is not None:
        w = np.asarray(sigmas, dtype=float)
        if w.shape != F.shape:
            raise ValidationError("sigmas must align with points")
        if np.any(w <= 0):
            # a zero spread means exact data; fall back to equal weights
            w = np.ones_like(F) if np.all(w <= 0) else np.where(w > 0, w, w[w > 0].min())
        weighted = True
    else:
        w = np.ones_like(F)
        weighted = False

    if np.ptp(F) <= CONSTANT_TOL:
        c = float(np.clip(F.mean(), 0, 1))
        return DecayFit(A=0.0, B=c, p=1.0, r=0.0, stderr_p=0.0, n_points=len(F), d=d)

    # start: profile the linear parameters over a grid of p
    best = None
    for p0 in np.linspace(0.0, 1.0, 201)[1:-1]:
        X = np.stack([p0**m, np.ones_like(m)], axis=1) / w[:, None]
        coef, *_ = np.linalg.lstsq(X, F / w, rcond=None)
        A0, B0 = coef
        B0 = float(np.clip(B0, 0, 1))
        A0 = float(np.clip(A0, 0, 1 - B0))
        cost = np.sum(((_model(A0, B0, p0, m) - F) / w) ** 2)
        if best is None or cost < best[0]:
            best = (cost, A0, B0, p0)
    _, A0, B0, p0 = best
    s0 = A0 / (1 - B0) if B0 < 1 else 0.0

    def resid(theta):
        s, B, p = theta
        return (_model(s * (1 - B), B, p, m) - F) / w

    sol = least_squares(
        resid,
        x0=np.clip([s0, B0, p0], 0, 1),
        bounds=([0, 0, 0], [1, 1, 1]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=10000,
    )
    s, B, p = (float(v) for v in sol.x)
    A = s * (1 - B)

    J = np.stack([p**m, np.ones_like(m), A * m * p ** np.maximum(m - 1, 0)], axis=1) / w[:, None]
    dof = len(F) - 3
    try:
        cov = np.linalg.inv(J.T @ J)
        if not weighted:
            cov = cov * (np.sum(sol.fun**2) / dof if dof > 0 else np.nan)
        stderr_p = float(np.sqrt(cov[2, 2])) if np.isfinite(cov[2, 2]) and cov[2, 2] >= 0 else float("nan")
    except np.linalg.LinAlgError:
        stderr_p = float("nan")
    return DecayFit(A=A, B=B, p=p, r=rb_number(p, d), stderr_p=stderr_p, n_points=len(F), d=d)
