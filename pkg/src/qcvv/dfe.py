"""
Direct fidelity estimation against stabilizer targets.

For a stabilizer state psi = (1/d) sum_{g in S} g, the fidelity is
F(rho, psi) = mean_{g in S} Tr(rho g), so uniformly sampling group elements
and measuring them gives an unbiased estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .clifford import paulis_commute, pauli_from_label, pauli_matrix, pauli_mul, pauli_to_label
from .errors import ValidationError
from .qmodel import DensityMatrix
from .simcore import derive_seed

Sampler = Callable[[str, int, int], float]


def _rank_gf2(rows: list[int]) -> int:
    rank = 0
    rows = list(rows)
    while rows:
        pivot = rows.pop()
        if pivot == 0:
            continue
        rank += 1
        low = pivot & -pivot
        rows = [r ^ pivot if r & low else r for r in rows]
    return rank


@dataclass(frozen=True)
class StabilizerTarget:
    n_qubits: int
    generators: tuple[str, ...]
    characteristic: dict  # unsigned Pauli label -> +1 / -1 on the 2^n group elements

    @classmethod
    def from_generators(cls, generators: Sequence[str]) -> "StabilizerTarget":
        """Build from n signed Pauli strings such as ``["+XX", "+ZZ"]``."""
        gens = [g.strip() for g in generators]
        if not gens:
            raise ValidationError("no stabilizer generators given")
        n = len(gens[0].lstrip("+-"))
        if any(len(g.lstrip("+-")) != n for g in gens):
            raise ValidationError("generators act on different qubit counts")
        if len(gens) != n:
            raise ValidationError(f"{n}-qubit stabilizer state needs {n} generators, got {len(gens)}")
        paulis = [pauli_from_label(g) for g in gens]
        for i in range(n):
            for j in range(i + 1, n):
                if not paulis_commute(paulis[i], paulis[j]):
                    raise ValidationError(f"generators {gens[i]} and {gens[j]} anticommute")
        if _rank_gf2([p[1] | (p[2] << n) for p in paulis]) < n:
            raise ValidationError("generators are not independent")
        char: dict[str, int] = {}
        for mask in range(2**n):
            acc = (0, 0, 0)
            for i in range(n):
                if (mask >> i) & 1:
                    acc = pauli_mul(acc, paulis[i])
            sign, label = pauli_to_label(acc, n)
            char[label] = sign
        if char.get("I" * n, 1) != 1:
            raise ValidationError("generators produce -I; no state is stabilized")
        return cls(n, tuple(gens), char)

    @classmethod
    def zero(cls, n_qubits: int) -> "StabilizerTarget":
        return cls.from_generators(["+" + "I" * q + "Z" + "I" * (n_qubits - q - 1) for q in range(n_qubits)])

    @classmethod
    def bell(cls) -> "StabilizerTarget":
        return cls.from_generators(["+XX", "+ZZ"])

    @property
    def group(self) -> list[tuple[str, int]]:
        """Stabilizer group elements as (label, sign), in generation order."""
        return list(self.characteristic.items())

    def density(self) -> DensityMatrix:
        d = 2**self.n_qubits
        proj = np.eye(d, dtype=complex)
        for g in self.generators:
            proj = proj @ (np.eye(d) + pauli_matrix(pauli_from_label(g), self.n_qubits)) / 2
        return DensityMatrix(proj)


@dataclass(frozen=True)
class DfeEstimate:
    f_hat: float
    stderr: float
    n_settings: int
    shots_per_setting: int

    @property
    def f_clamped(self) -> float:
        return float(min(max(self.f_hat, 0.0), 1.0))


def dfe_stabilizer(
    target: StabilizerTarget,
    sampler: Sampler,
    n_settings: int,
    shots_per_setting: int,
    seed: int,
    exhaustive: bool = False,
) -> DfeEstimate:
    """Average sign-corrected Pauli expectations over stabilizer-group elements.

    Random mode draws ``n_settings`` elements uniformly with replacement and
    reports the standard error across settings. Exhaustive mode measures every
    group element once; its standard error is the propagated shot noise (zero
    for an exact sampler).
    """
    group = target.group
    exact = bool(getattr(sampler, "exact", False))
    if exhaustive:
        picks = list(range(len(group)))
    else:
        if n_settings < 1:
            raise ValidationError("n_settings must be >= 1")
        picks = [int(i) for i in np.random.default_rng(seed).integers(0, len(group), n_settings)]
    if not exact and shots_per_setting < 1:
        raise ValidationError("shots_per_setting must be >= 1")
    vals = np.array(
        [sign * sampler(label, shots_per_setting, derive_seed(seed, i)) for i, (label, sign) in
         ((i, group[k]) for i, k in enumerate(picks))]
    )
    if not np.all(np.isfinite(vals)):
        raise ValidationError("sampler returned a non-finite expectation")
    f_hat = float(vals.mean())
    if exhaustive or len(vals) < 2:
        shot_var = 0.0 if exact else float(np.sum(1 - np.clip(vals, -1, 1) ** 2)) / shots_per_setting
        stderr = float(np.sqrt(shot_var)) / len(vals)
    else:
        stderr = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    return DfeEstimate(f_hat, stderr, len(vals), shots_per_setting)
