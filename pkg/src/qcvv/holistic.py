"""
Quantum volume with heavy-output analysis, and linear cross-entropy fidelity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError
from .qmodel import GateSet, random_unitary
from .simcore import Circuit, CountData, circuit_probabilities, derive_seed, parallel_map, sample_counts

QV_THRESHOLD = 2 / 3
Z_975 = 1.959963984540054  # one-sided 97.5% normal quantile
MAX_QV_QUBITS = 5


@dataclass(frozen=True)
class QvLayer:
    permutation: tuple[int, ...]
    blocks: tuple[np.ndarray, ...]  # 4x4 unitaries on (perm[2b], perm[2b+1])

    def pairs(self) -> list[tuple[int, int]]:
        return [(self.permutation[2 * b], self.permutation[2 * b + 1]) for b in range(len(self.blocks))]


@dataclass(frozen=True)
class QvCircuit:
    n_qubits: int
    layers: tuple[QvLayer, ...]
    seed: int
    circuit_id: str = ""

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_circuit(self) -> Circuit:
        labels, defs = [], {}
        for li, layer in enumerate(self.layers):
            for b, (pair, U) in enumerate(zip(layer.pairs(), layer.blocks)):
                label = f"qv:{li}:{b}"
                labels.append(label)
                defs[label] = (pair, U)
        return Circuit(self.n_qubits, tuple(labels), self.circuit_id, defs)


def generate_qv_circuits(n: int, n_circuits: int, seed: int) -> list[QvCircuit]:
    """Square random circuits: n layers of a random qubit permutation and Haar two-qubit blocks."""
    if not 2 <= n <= MAX_QV_QUBITS:
        raise ValidationError(f"quantum volume supports 2..{MAX_QV_QUBITS} qubits, got {n}")
    if n_circuits < 1:
        raise ValidationError("need at least one circuit")
    out = []
    for i in range(n_circuits):
        cseed = derive_seed(seed, i)
        rng = np.random.default_rng(cseed)
        layers = []
        for _ in range(n):
            perm = tuple(int(q) for q in rng.permutation(n))
            blocks = tuple(random_unitary(4, rng) for _ in range(n // 2))
            layers.append(QvLayer(perm, blocks))
        out.append(QvCircuit(n, tuple(layers), cseed, f"qv:n{n}:c{i}"))
    return out


def heavy_outputs(ideal_probs) -> set[int]:
    """Outcomes whose ideal probability is strictly above the median."""
    p = np.asarray(ideal_probs, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p < -1e-9) or abs(p.sum() - 1) > 1e-6:
        raise ValidationError("ideal_probs is not a probability vector")
    med = float(np.median(p))
    return {int(i) for i in np.nonzero(p > med)[0]}


def ideal_probabilities(qc: QvCircuit) -> np.ndarray:
    return circuit_probabilities(GateSet.ideal(qc.n_qubits), qc.to_circuit())


def heavy_output_probability(heavy: set[int], data: CountData, n_qubits: int) -> float:
    f = data.frequencies(2**n_qubits)
    return float(sum(f[i] for i in heavy))


@dataclass(frozen=True)
class QvLevel:
    n: int
    mean_hop: float
    lcb: float
    passed: bool
    n_circuits: int
    hops: tuple[float, ...]


@dataclass(frozen=True)
class QvResult:
    levels: tuple[QvLevel, ...]
    qv: int

    def level(self, n: int) -> QvLevel:
        for lv in self.levels:
            if lv.n == n:
                return lv
        raise KeyError(n)


def summarize_hops(n: int, hops: Sequence[float]) -> QvLevel:
    """Mean heavy-output probability and its one-sided 97.5% lower confidence bound."""
    h = np.asarray(hops, dtype=float)
    if h.size < 2:
        raise ValidationError("need at least two circuits for a confidence bound")
    mean = float(h.mean())
    lcb = mean - Z_975 * float(h.std(ddof=1)) / np.sqrt(h.size)
    return QvLevel(n, mean, float(lcb), bool(lcb > QV_THRESHOLD), int(h.size), tuple(float(x) for x in h))


def qv_from_levels(levels: Sequence[QvLevel]) -> QvResult:
    passing = [lv.n for lv in levels if lv.passed]
    return QvResult(tuple(levels), 2 ** max(passing) if passing else 1)


def analyze_qv(circuits: Sequence[QvCircuit], data: Sequence[CountData], workers: int | None = None) -> QvResult:
    """Heavy-output analysis of recorded counts; heavy sets come from noiseless simulation."""
    if len(circuits) != len(data):
        raise ValidationError(f"{len(circuits)} circuits but {len(data)} count records")
    for qc, cd in zip(circuits, data):
        if qc.circuit_id != cd.circuit_id:
            raise ValidationError(f"circuit id mismatch: {qc.circuit_id!r} vs {cd.circuit_id!r}")
    heavy = parallel_map(lambda qc: heavy_outputs(ideal_probabilities(qc)), list(circuits), workers)
    by_n: dict[int, list[float]] = {}
    for qc, cd, hs in zip(circuits, data, heavy):
        by_n.setdefault(qc.n_qubits, []).append(heavy_output_probability(hs, cd, qc.n_qubits))
    return qv_from_levels([summarize_hops(n, by_n[n]) for n in sorted(by_n)])


def run_quantum_volume(
    gs_builder: Callable[[int], GateSet],
    n_max: int,
    n_circuits: int,
    shots: int,
    seed: int,
    exact: bool = False,
    n_min: int = 2,
    workers: int | None = None,
) -> QvResult:
    """Run square circuits for n_min..n_max qubits on ``gs_builder(n)`` and score them."""
    if n_max > MAX_QV_QUBITS:
        raise ValidationError(f"n_max={n_max} exceeds the simulator limit {MAX_QV_QUBITS}")
    if not exact and shots < 1:
        raise ValidationError("shots must be >= 1")
    levels = []
    for n in range(n_min, n_max + 1):
        gs = gs_builder(n)
        circuits = generate_qv_circuits(n, n_circuits, derive_seed(seed, n))

        def one(item, gs=gs):
            i, qc = item
            c = qc.to_circuit()
            heavy = heavy_outputs(ideal_probabilities(qc))
            p = circuit_probabilities(gs, c)
            if exact:
                return float(sum(p[k] for k in heavy))
            cd = sample_counts(p, shots, derive_seed(qc.seed, 1), c.circuit_id)
            return heavy_output_probability(heavy, cd, n)

        hops = parallel_map(one, list(enumerate(circuits)), workers)
        levels.append(summarize_hops(n, hops))
    return qv_from_levels(levels)


def linear_xeb(samples: Sequence[int], ideal_probs) -> float:
    """d * mean(p_ideal(x)) - 1 over the observed outcomes."""
    p = np.asarray(ideal_probs, dtype=float)
    s = np.asarray(samples, dtype=int)
    if s.size == 0:
        raise ValidationError("no samples")
    if np.any(s < 0) or np.any(s >= p.size):
        raise ValidationError("sample outcome outside the distribution's support")
    return float(p.size * p[s].mean() - 1)
