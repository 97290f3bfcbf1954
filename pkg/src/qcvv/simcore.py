"""
Density-matrix circuit simulation, parametric noise, and seeded sampling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .gates import rotation_labels, standard_unitary
from .qmodel import (
    DensityMatrix,
    GateSet,
    Povm,
    QuantumChannel,
    X,
    amplitude_damping_channel,
    coherent_rotation_channel,
    compose_channels,
    depolarizing_channel,
    embed_unitary,
    vec,
)

PROB_ATOL = 1e-9


@dataclass(frozen=True)
class Circuit:
    """Ordered gate labels executed after the native preparation.

    ``definitions`` declares circuit-local gates as ``label -> (qubits, unitary)``;
    they take precedence over the gate set and receive its gate noise.
    """

    n_qubits: int
    layers: tuple[str, ...] = ()
    circuit_id: str = ""
    definitions: Mapping[str, tuple] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "definitions", dict(self.definitions))

    def __len__(self) -> int:
        return len(self.layers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        if (self.n_qubits, self.layers, self.circuit_id) != (other.n_qubits, other.layers, other.circuit_id):
            return False
        if self.definitions.keys() != other.definitions.keys():
            return False
        for k, (qubits, U) in self.definitions.items():
            q2, U2 = other.definitions[k]
            if tuple(qubits) != tuple(q2) or not np.array_equal(U, U2):
                return False
        return True


@dataclass(frozen=True)
class CountData:
    """Outcome counts for one circuit, or exact probabilities when ``probs`` is set."""

    circuit_id: str
    shots: int
    counts: Mapping[int, int] = field(default_factory=dict)
    probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.shots < 0:
            raise ValidationError(f"{self.circuit_id}: negative shot count {self.shots}")
        counts = {int(k): int(v) for k, v in dict(self.counts).items()}
        for k, v in counts.items():
            if v < 0:
                raise ValidationError(f"{self.circuit_id}: negative count {v} for outcome {k}")
            if k < 0:
                raise ValidationError(f"{self.circuit_id}: negative outcome index {k}")
        if self.probs is None and sum(counts.values()) != self.shots:
            raise ValidationError(
                f"{self.circuit_id}: counts sum to {sum(counts.values())}, expected {self.shots} shots"
            )
        object.__setattr__(self, "counts", counts)
        if self.probs is not None:
            p = tuple(float(x) for x in self.probs)
            if min(p, default=0.0) < -PROB_ATOL or abs(sum(p) - 1) > 1e-6:
                raise ValidationError(f"{self.circuit_id}: exact probabilities are not a distribution")
            object.__setattr__(self, "probs", p)

    @property
    def exact(self) -> bool:
        return self.probs is not None

    def check_outcomes(self, n_outcomes: int) -> None:
        if self.probs is not None and len(self.probs) != n_outcomes:
            raise ValidationError(f"{self.circuit_id}: {len(self.probs)} probabilities, expected {n_outcomes}")
        bad = [k for k in self.counts if k >= n_outcomes]
        if bad:
            raise ValidationError(f"{self.circuit_id}: outcome index {bad[0]} >= {n_outcomes} effects")

    def weights(self, n_outcomes: int) -> np.ndarray:
        """Per-outcome likelihood weights: counts, or exact probabilities."""
        self.check_outcomes(n_outcomes)
        if self.probs is not None:
            return np.clip(np.array(self.probs), 0, None)
        w = np.zeros(n_outcomes)
        for k, v in self.counts.items():
            w[k] = v
        return w

    def frequencies(self, n_outcomes: int) -> np.ndarray:
        w = self.weights(n_outcomes)
        if self.probs is not None:
            return w
        if self.shots == 0:
            raise ValidationError(f"{self.circuit_id}: no shots recorded")
        return w / self.shots


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

NOISE_KINDS = ("depolarizing", "amplitude_damping", "coherent_rotation", "spam")


@dataclass(frozen=True)
class NoiseSpec:
    """Ground-truth error model.

    ``depolarizing``: q; ``amplitude_damping``: gamma; ``coherent_rotation``:
    axis and angle (radians); ``spam``: prep_flip and readout_flip.
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValidationError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        p = dict(self.params)
        if self.kind == "depolarizing":
            _unit(p, "q")
        elif self.kind == "amplitude_damping":
            _unit(p, "gamma")
        elif self.kind == "coherent_rotation":
            if str(p.get("axis", "")).upper() not in ("X", "Y", "Z"):
                raise ValidationError("coherent_rotation needs axis X, Y or Z")
            p["axis"] = str(p["axis"]).upper()
            p["angle"] = float(p.get("angle", 0.0))
        else:
            p.setdefault("prep_flip", 0.0)
            p.setdefault("readout_flip", 0.0)
            _unit(p, "prep_flip")
            _unit(p, "readout_flip")
        object.__setattr__(self, "params", p)

    @classmethod
    def parse(cls, text: str) -> "NoiseSpec":
        """Parse ``kind:param[,param]``, e.g. ``depolarizing:0.02`` or ``coherent_rotation:Z,0.1``."""
        kind, _, rest = text.partition(":")
        args = [a.strip() for a in rest.split(",")] if rest else []
        try:
            if kind == "depolarizing":
                (q,) = args
                return cls(kind, {"q": float(q)})
            if kind == "amplitude_damping":
                (g,) = args
                return cls(kind, {"gamma": float(g)})
            if kind == "coherent_rotation":
                axis, angle = args
                return cls(kind, {"axis": axis, "angle": float(angle)})
            if kind == "spam":
                prep, readout = args
                return cls(kind, {"prep_flip": float(prep), "readout_flip": float(readout)})
        except ValueError:
            raise ValidationError(f"cannot parse noise flag {text!r}") from None
        raise ValidationError(f"unknown noise kind in {text!r}")

    def to_text(self) -> str:
        p = self.params
        if self.kind == "depolarizing":
            return f"depolarizing:{p['q']!r}"
        if self.kind == "amplitude_damping":
            return f"amplitude_damping:{p['gamma']!r}"
        if self.kind == "coherent_rotation":
            return f"coherent_rotation:{p['axis']},{p['angle']!r}"
        return f"spam:{p['prep_flip']!r},{p['readout_flip']!r}"


def _unit(p: dict, key: str) -> None:
    try:
        v = float(p[key])
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"noise parameter {key!r} missing or not a number") from None
    if not 0 <= v <= 1:
        raise ValidationError(f"noise parameter {key}={v} outside [0, 1]")
    p[key] = v


def noise_channel(noise: NoiseSpec, n_qubits: int) -> QuantumChannel | None:
    p = noise.params
    if noise.kind == "depolarizing":
        return None if p["q"] == 0 else depolarizing_channel(p["q"], n_qubits)
    if noise.kind == "amplitude_damping":
        return None if p["gamma"] == 0 else amplitude_damping_channel(p["gamma"], n_qubits)
    if noise.kind == "coherent_rotation":
        return None if p["angle"] == 0 else coherent_rotation_channel(p["axis"], p["angle"], n_qubits)
    return None


def _bitflip_each_qubit(rho: np.ndarray, flip: float, n_qubits: int) -> np.ndarray:
    for q in range(n_qubits):
        Xq = embed_unitary(X, [q], n_qubits)
        rho = (1 - flip) * rho + flip * (Xq @ rho @ Xq)
    return rho


def _readout_confusion(meas: Povm, flip: float, n_qubits: int) -> Povm:
    d = 2**n_qubits
    if len(meas) != d:
        raise ValidationError(f"readout flips need {d} outcomes, POVM has {len(meas)}")
    c1 = np.array([[1 - flip, flip], [flip, 1 - flip]])
    C = np.ones((1, 1))
    for _ in range(n_qubits):
        C = np.kron(C, c1)
    effects = [sum(C[k, j] * meas.effects[j] for j in range(d)) for k in range(d)]
    return Povm(tuple(effects), atol=meas.atol)


def build_noisy_gateset(ideal: GateSet, noise: NoiseSpec) -> GateSet:
    """Attach ``noise`` after every gate (or to prep/readout for ``spam``)."""
    n = ideal.n_qubits
    if noise.kind == "spam":
        prep_flip = noise.params["prep_flip"]
        readout_flip = noise.params["readout_flip"]
        prep = ideal.prep
        if prep_flip:
            m = _bitflip_each_qubit(np.array(prep.mat), prep_flip, n)
            prep = DensityMatrix((m + m.conj().T) / 2, atol=prep.atol)
        meas = _readout_confusion(ideal.meas, readout_flip, n) if readout_flip else ideal.meas
        return GateSet(prep=prep, meas=meas, gates=ideal.gates, gate_noise=ideal.gate_noise, library=ideal.library)
    ch = noise_channel(noise, n)
    if ch is None:
        return ideal
    total = ch if ideal.gate_noise is None else compose_channels(ch, ideal.gate_noise)
    return GateSet(prep=ideal.prep, meas=ideal.meas, gates=ideal.gates, gate_noise=total, library=ideal.library)


def noisy_gateset(n_qubits: int, noises: Sequence[NoiseSpec] = ()) -> GateSet:
    gs = GateSet.ideal(n_qubits)
    for nz in noises:
        gs = build_noisy_gateset(gs, nz)
    return gs


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _resolve(gs: GateSet, c: Circuit, label: str, local: dict) -> QuantumChannel:
    if label in c.definitions:
        if label not in local:
            qubits, U = c.definitions[label]
            local[label] = QuantumChannel(kraus=[embed_unitary(np.asarray(U), list(qubits), c.n_qubits)], check=False)
        return local[label]
    try:
        return gs.base(label)
    except KeyError:
        raise ValidationError(f"unknown gate label {label!r} in circuit {c.circuit_id!r}") from None


def final_state(gs: GateSet, c: Circuit) -> np.ndarray:
    """Density matrix after the circuit (no validation)."""
    if c.n_qubits != gs.n_qubits:
        raise ValidationError(
            f"circuit {c.circuit_id!r} has {c.n_qubits} qubits, gate set has {gs.n_qubits}"
        )
    rho = np.array(gs.prep.mat)
    local: dict = {}
    for label in c.layers:
        rho = _resolve(gs, c, label, local).apply_raw(rho)
        if gs.gate_noise is not None:
            rho = gs.gate_noise.apply_raw(rho)
    return rho


def _clean_probs(p: np.ndarray, where: str = "") -> np.ndarray:
    if np.any(p < -PROB_ATOL) or np.any(p > 1 + PROB_ATOL) or abs(p.sum() - 1) > PROB_ATOL:
        raise ValidationError(f"{where}invalid outcome probabilities {p}")
    return np.clip(p, 0.0, 1.0)


def circuit_probabilities(gs: GateSet, c: Circuit) -> np.ndarray:
    """p_k = <<E_k| G_L ... G_1 |rho>> for each effect of the gate set's POVM."""
    rho = final_state(gs, c)
    p = np.real(gs.meas.matrix() @ vec(rho))
    return _clean_probs(p, f"circuit {c.circuit_id!r}: ")


def sample_counts(probs, shots: int, seed: int, circuit_id: str = "") -> CountData:
    """Multinomial sample; identical (probs, shots, seed) give identical counts."""
    p = np.asarray(probs, dtype=float)
    if shots < 0:
        raise ValidationError(f"negative shot count {shots}")
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("probabilities must be a nonempty vector")
    p = _clean_probs(p)
    p = p / p.sum()
    counts = np.random.default_rng(seed).multinomial(shots, p)
    return CountData(circuit_id, shots, {k: int(v) for k, v in enumerate(counts)})


def derive_seed(seed: int, index: int) -> int:
    """Stable 64-bit seed for item ``index`` of a run seeded with ``seed``."""
    lo, hi = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("QCVV_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map, fanned out over QCVV_THREADS workers."""
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def run_design(
    gs: GateSet | Mapping[int, GateSet],
    circuits: Sequence[Circuit],
    shots_per_circuit: int,
    seed: int,
    exact: bool = False,
    workers: int | None = None,
) -> list[CountData]:
    """Simulate every circuit; circuit i is sampled with ``derive_seed(seed, i)``.

    ``gs`` may map qubit counts to gate sets for designs mixing register widths.
    """

    def one(item):
        i, c = item
        try:
            g = gs if isinstance(gs, GateSet) else gs.get(c.n_qubits)
            if g is None:
                raise ValidationError(f"no gate set for {c.n_qubits} qubits")
            probs = circuit_probabilities(g, c)
        except ValidationError as exc:
            raise ValidationError(f"circuit index {i}: {exc}") from None
        if exact:
            return CountData(c.circuit_id, 0, {}, tuple(float(x) for x in probs))
        return sample_counts(probs, shots_per_circuit, derive_seed(seed, i), c.circuit_id)

    return parallel_map(one, list(enumerate(circuits)), workers)


# ---------------------------------------------------------------------------
# Pauli measurements
# ---------------------------------------------------------------------------


def _parity_signs(pauli: str) -> np.ndarray:
    n = len(pauli)
    support = [q for q, ch in enumerate(pauli) if ch != "I"]
    idx = np.arange(2**n)
    par = np.zeros(2**n, dtype=int)
    for q in support:
        par ^= (idx >> (n - 1 - q)) & 1
    return 1 - 2 * par


class PauliSampler:
    """Measures a Pauli observable on a fixed state by basis rotation and Z readout.

    Calling ``sampler(pauli, shots, seed)`` returns the empirical mean of the
    +-1 outcomes, or the exact expectation when ``exact`` is set.
    """

    def __init__(self, rho: DensityMatrix, meas: Povm | None = None, exact: bool = False):
        self.rho = rho
        self.n_qubits = rho.n_qubits
        self.meas = meas if meas is not None else Povm.computational(rho.dim)
        self.exact = exact

    def probabilities(self, pauli: str) -> np.ndarray:
        if len(pauli) != self.n_qubits:
            raise ValidationError(f"Pauli {pauli!r} does not act on {self.n_qubits} qubits")
        U = np.eye(self.rho.dim, dtype=complex)
        for lbl in rotation_labels(pauli):
            U = standard_unitary(lbl, self.n_qubits) @ U
        out = U @ self.rho.mat @ U.conj().T
        return _clean_probs(np.real(self.meas.matrix() @ vec(out)))

    def __call__(self, pauli: str, shots: int, seed: int) -> float:
        probs = self.probabilities(pauli)
        signs = _parity_signs(pauli)
        if self.exact:
            return float(signs @ probs)
        if shots < 1:
            raise ValidationError("Pauli sampling needs at least one shot")
        counts = np.random.default_rng(seed).multinomial(shots, probs / probs.sum())
        return float(signs @ counts) / shots
