"""
Open-system model of a qubit register: states, channels, measurements.

Superoperators act on density matrices vectorized by column stacking,
``vec(rho) = rho.reshape(-1, order="F")``, so that

    vec(A X B) = (B^T kron A) vec(X)

and a channel with Kraus operators K_k has superoperator sum_k conj(K_k) kron K_k.
Choi matrices are normalized to unit trace: J = (G kron id)(|Psi><Psi|) with
|Psi> = sum_i |i>|i> / sqrt(d), system factor first.

Qubit 0 is the most significant tensor factor (and the leftmost bit of an
outcome index).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

DEFAULT_ATOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def n_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if dim < 2 or 2**n != dim:
        raise ValidationError(f"dimension {dim} is not a power of two >= 2")
    return n


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    return v.reshape(dim, dim, order="F")


def pauli_string_matrix(label: str) -> np.ndarray:
    """Matrix of an unsigned Pauli string such as ``"XZ"`` (qubit 0 first)."""
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        try:
            out = np.kron(out, PAULIS[ch])
        except KeyError:
            raise ValidationError(f"bad Pauli character {ch!r} in {label!r}") from None
    return out


@functools.lru_cache(maxsize=None)
def pauli_labels(n_qubits: int) -> tuple[str, ...]:
    return tuple("".join(p) for p in itertools.product("IXYZ", repeat=n_qubits))


@functools.lru_cache(maxsize=None)
def pauli_basis(n_qubits: int) -> np.ndarray:
    """d^2 x d^2 matrix whose columns are vec(P)/sqrt(d) for P in pauli_labels(n)."""
    d = 2**n_qubits
    cols = [vec(pauli_string_matrix(lbl)) / np.sqrt(d) for lbl in pauli_labels(n_qubits)]
    basis = np.stack(cols, axis=1)
    basis.setflags(write=False)
    return basis


def _is_hermitian(m: np.ndarray, atol: float) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol)


def _min_eig(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0])


# ---------------------------------------------------------------------------
# States and measurements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PureState:
    vec: np.ndarray
    atol: float = field(default=DEFAULT_ATOL, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vec, dtype=complex).reshape(-1)
        norm = np.linalg.norm(v)
        if abs(norm - 1) > self.atol:
            raise ValidationError(f"state vector norm deficit {1 - norm:.3e} exceeds {self.atol:g}")
        object.__setattr__(self, "vec", _frozen(v))

    @property
    def dim(self) -> int:
        return self.vec.size


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace d x d matrix."""

    mat: np.ndarray
    atol: float = field(default=DEFAULT_ATOL, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError(f"density matrix must be square, got shape {m.shape}")
        if not _is_hermitian(m, self.atol):
            raise ValidationError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1) > self.atol:
            raise ValidationError(f"density matrix trace {tr.real:.12g} differs from 1")
        lam = _min_eig(m)
        if lam < -self.atol:
            raise ValidationError(f"density matrix has negative eigenvalue {lam:.3e}")
        object.__setattr__(self, "mat", _frozen(m))

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    def superket(self) -> np.ndarray:
        return vec(self.mat)

    def bloch(self) -> np.ndarray:
        """Expectations of X, Y, Z for a single qubit."""
        if self.dim != 2:
            raise ValidationError("Bloch vector is defined for a single qubit only")
        return np.real([np.trace(P @ self.mat) for P in (X, Y, Z)])

    @classmethod
    def from_bloch(cls, r: Sequence[float]) -> "DensityMatrix":
        rx, ry, rz = r
        return cls((I2 + rx * X + ry * Y + rz * Z) / 2)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def basis(cls, index: int, dim: int) -> "DensityMatrix":
        m = np.zeros((dim, dim), dtype=complex)
        m[index, index] = 1
        return cls(m)


def pure_density(psi: PureState | np.ndarray) -> DensityMatrix:
    """Rank-1 projector |psi><psi|."""
    if not isinstance(psi, PureState):
        psi = PureState(psi)
    return DensityMatrix(np.outer(psi.vec, psi.vec.conj()))


@dataclass(frozen=True)
class Povm:
    effects: tuple
    atol: float = field(default=DEFAULT_ATOL, repr=False, compare=False)

    def __post_init__(self):
        effs = [np.asarray(e, dtype=complex) for e in self.effects]
        if not effs:
            raise ValidationError("a POVM needs at least one effect")
        d = effs[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for k, e in enumerate(effs):
            if e.shape != (d, d):
                raise ValidationError(f"effect {k} has shape {e.shape}, expected {(d, d)}")
            if not _is_hermitian(e, self.atol):
                raise ValidationError(f"effect {k} is not Hermitian")
            lam = _min_eig(e)
            if lam < -self.atol:
                raise ValidationError(f"effect {k} has negative eigenvalue {lam:.3e}")
            total += e
        dev = np.max(np.abs(total - np.eye(d)))
        if dev > self.atol:
            raise ValidationError(f"effects sum to identity only within {dev:.3e}")
        object.__setattr__(self, "effects", tuple(_frozen(e) for e in effs))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self) -> int:
        return len(self.effects)

    def matrix(self) -> np.ndarray:
        """Stacked rows <<E_k| so that probabilities are matrix() @ vec(rho)."""
        return np.stack([vec(e).conj() for e in self.effects])

    @classmethod
    def computational(cls, dim: int) -> "Povm":
        return cls(tuple(DensityMatrix.basis(k, dim).mat for k in range(dim)))


def _check_effect(E: np.ndarray, atol: float) -> None:
    if not _is_hermitian(E, atol):
        raise ValidationError("effect is not Hermitian")
    lam = np.linalg.eigvalsh((E + E.conj().T) / 2)
    if lam[0] < -atol or lam[-1] > 1 + atol:
        raise ValidationError(f"effect eigenvalues [{lam[0]:.3e}, {lam[-1]:.3e}] outside [0, 1]")


def born_probability(E: np.ndarray, rho: DensityMatrix, atol: float = DEFAULT_ATOL) -> float:
    """Pr(E|rho) = <<E|rho>> = Tr(E rho)."""
    E = np.asarray(E, dtype=complex)
    if E.shape != rho.mat.shape:
        raise ValidationError(f"effect shape {E.shape} does not match state dim {rho.dim}")
    _check_effect(E, atol)
    p = float(np.real(np.vdot(vec(E), rho.superket())))
    if -atol <= p < 0:
        p = 0.0
    elif 1 < p <= 1 + atol:
        p = 1.0
    return p


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------


def kraus_to_superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Superoperator S with S @ vec(rho) == vec(sum_k K rho K^dagger)."""
    if len(kraus) == 0:
        raise ValidationError("empty Kraus list")
    ks = [np.asarray(k, dtype=complex) for k in kraus]
    shape = ks[0].shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValidationError(f"Kraus operators must be square, got {shape}")
    for k in ks:
        if k.shape != shape:
            raise ValidationError(f"Kraus shape mismatch: {k.shape} vs {shape}")
    return sum(np.kron(k.conj(), k) for k in ks)


def superop_to_choi(superop: np.ndarray) -> np.ndarray:
    """Unit-trace Choi matrix (system factor first) of a superoperator."""
    d = int(round(np.sqrt(superop.shape[0])))
    s4 = np.asarray(superop).reshape(d, d, d, d)
    return s4.transpose(1, 3, 0, 2).reshape(d * d, d * d) / d


def choi_to_superop(choi: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(choi.shape[0])))
    j4 = np.asarray(choi).reshape(d, d, d, d) * d
    return j4.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def choi_to_kraus(choi: np.ndarray, atol: float = DEFAULT_ATOL) -> list[np.ndarray]:
    d = int(round(np.sqrt(choi.shape[0])))
    lam, vecs = np.linalg.eigh((choi + choi.conj().T) / 2 * d)
    kraus = [np.sqrt(l) * vecs[:, i].reshape(d, d) for i, l in enumerate(lam) if l > atol]
    return kraus[::-1] or [np.zeros((d, d), dtype=complex)]


class QuantumChannel:
    """CPTP map with lazily synchronized Kraus, superoperator and Choi forms.

    Build from ``kraus=`` or ``superop=``; the missing representation is
    derived on first access. Instances are treated as immutable.
    """

    def __init__(self, kraus=None, superop=None, *, atol: float = DEFAULT_ATOL, check: bool = True):
        if kraus is None and superop is None:
            raise ValidationError("channel needs kraus or superop")
        self.atol = atol
        if kraus is not None:
            ks = tuple(_frozen(k) for k in kraus)
            if not ks:
                raise ValidationError("empty Kraus list")
            self.__dict__["kraus"] = ks
        if superop is not None:
            self.__dict__["superop"] = _frozen(superop)
        self.dim = (self.kraus[0].shape[0] if kraus is not None
                    else int(round(np.sqrt(self.superop.shape[0]))))
        if check:
            self.validate()

    @functools.cached_property
    def superop(self) -> np.ndarray:
        return _frozen(kraus_to_superop(self.kraus))

    @functools.cached_property
    def kraus(self) -> tuple:
        return tuple(_frozen(k) for k in choi_to_kraus(self.choi, self.atol))

    @functools.cached_property
    def choi(self) -> np.ndarray:
        return _frozen(superop_to_choi(self.superop))

    @functools.cached_property
    def ptm(self) -> np.ndarray:
        """Pauli transfer matrix: the superoperator in the normalized Pauli basis."""
        B = pauli_basis(n_qubits_of(self.dim))
        R = B.conj().T @ self.superop @ B
        return R.real if np.max(np.abs(R.imag)) < 1e-9 else R

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    def validate(self, cp: bool | None = None) -> None:
        d = self.dim
        if "kraus" in self.__dict__:
            for k in self.kraus:
                if k.shape != (d, d):
                    raise ValidationError(f"Kraus shape mismatch: {k.shape} vs {(d, d)}")
            tp_dev = np.max(np.abs(sum(k.conj().T @ k for k in self.kraus) - np.eye(d)))
        else:
            if self.superop.shape != (d * d, d * d):
                raise ValidationError(f"superoperator shape {self.superop.shape} is not d^2 x d^2")
            tp_dev = np.max(np.abs(vec(np.eye(d)).conj() @ self.superop - vec(np.eye(d)).conj()))
        if tp_dev > self.atol:
            raise ValidationError(f"channel is not trace preserving (deviation {tp_dev:.3e})")
        if cp is None:
            cp = "kraus" not in self.__dict__
        if cp:
            J = self.choi
            if not _is_hermitian(J, self.atol):
                raise ValidationError("Choi matrix is not Hermitian")
            lam = _min_eig(J)
            if lam < -self.atol:
                raise ValidationError(f"channel is not completely positive (Choi eigenvalue {lam:.3e})")
        if "kraus" in self.__dict__ and "superop" in self.__dict__:
            dev = np.max(np.abs(kraus_to_superop(self.kraus) - self.superop))
            if dev > self.atol:
                raise ValidationError(f"Kraus and superoperator forms disagree by {dev:.3e}")

    def is_unitary(self) -> bool:
        return "kraus" in self.__dict__ and len(self.kraus) == 1

    def apply_raw(self, rho: np.ndarray) -> np.ndarray:
        """Apply to a bare matrix without validation (hot path for simulation)."""
        if "kraus" in self.__dict__ and len(self.kraus) <= self.dim:
            return sum(k @ rho @ k.conj().T for k in self.kraus)
        return unvec(self.superop @ vec(rho), self.dim)

    def __repr__(self) -> str:
        return f"QuantumChannel(dim={self.dim})"


def unitary_channel(U: np.ndarray, atol: float = DEFAULT_ATOL) -> QuantumChannel:
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValidationError(f"unitary must be square, got {U.shape}")
    dev = np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]))
    if dev > atol:
        raise ValidationError(f"matrix is not unitary (||U^dag U - I|| = {dev:.3e})")
    return QuantumChannel(kraus=[U], atol=atol, check=False)


def identity_channel(dim: int) -> QuantumChannel:
    return QuantumChannel(kraus=[np.eye(dim)], check=False)


def apply_channel(G: QuantumChannel, rho: DensityMatrix) -> DensityMatrix:
    if G.dim != rho.dim:
        raise ValidationError(f"channel dim {G.dim} does not match state dim {rho.dim}")
    out = G.apply_raw(rho.mat)
    return DensityMatrix((out + out.conj().T) / 2, atol=max(G.atol, rho.atol))


def compose_channels(G2: QuantumChannel, G1: QuantumChannel) -> QuantumChannel:
    """The channel that applies G1 first, then G2."""
    if G1.dim != G2.dim:
        raise ValidationError(f"cannot compose channels of dims {G2.dim} and {G1.dim}")
    atol = max(G1.atol, G2.atol)
    if "kraus" in G1.__dict__ and "kraus" in G2.__dict__ and len(G1.kraus) * len(G2.kraus) <= G1.dim**2:
        ks = [k2 @ k1 for k2 in G2.kraus for k1 in G1.kraus]
        return QuantumChannel(kraus=ks, superop=G2.superop @ G1.superop, atol=atol, check=False)
    return QuantumChannel(superop=G2.superop @ G1.superop, atol=atol, check=False)


# ---------------------------------------------------------------------------
# Standard channels
# ---------------------------------------------------------------------------


def embed_unitary(U: np.ndarray, qubits: Sequence[int], n_qubits: int) -> np.ndarray:
    """Full-register matrix of U acting on ``qubits`` (in the given order)."""
    U = np.asarray(U, dtype=complex)
    k = len(qubits)
    if U.shape != (2**k, 2**k):
        raise ValidationError(f"{k}-qubit operator expected, got shape {U.shape}")
    if len(set(qubits)) != k or any(not 0 <= q < n_qubits for q in qubits):
        raise ValidationError(f"invalid qubit targets {tuple(qubits)} for {n_qubits} qubits")
    if k == n_qubits and list(qubits) == list(range(n_qubits)):
        return U.copy()
    d = 2**n_qubits
    rest = [q for q in range(n_qubits) if q not in qubits]
    order = list(qubits) + rest
    full = np.kron(U, np.eye(2 ** len(rest)))
    # full acts on the permuted register; conjugate by the permutation.
    t = full.reshape([2] * (2 * n_qubits))
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n_qubits + i for i in inv])
    return t.reshape(d, d)


def _tensor_power_kraus(single: Sequence[np.ndarray], n_qubits: int) -> list[np.ndarray]:
    out = [np.ones((1, 1), dtype=complex)]
    for _ in range(n_qubits):
        out = [np.kron(a, b) for a in out for b in single]
    return out


def depolarizing_channel(q: float, n_qubits: int = 1) -> QuantumChannel:
    """rho -> (1 - q) rho + q Tr(rho) I/d on the whole register."""
    if not 0 <= q <= 1:
        raise ValidationError(f"depolarizing strength {q} outside [0, 1]")
    d = 2**n_qubits
    if n_qubits <= 2:
        w_id = 1 - q * (d * d - 1) / (d * d)
        ks = [np.sqrt(q / (d * d)) * pauli_string_matrix(lbl) for lbl in pauli_labels(n_qubits)[1:]]
        ks.insert(0, np.sqrt(max(w_id, 0.0)) * np.eye(d))
        return QuantumChannel(kraus=ks, check=False)
    vid = vec(np.eye(d))
    sup = (1 - q) * np.eye(d * d) + q * np.outer(vid, vid.conj()) / d
    return QuantumChannel(superop=sup, check=False)


def amplitude_damping_channel(gamma: float, n_qubits: int = 1) -> QuantumChannel:
    """Independent amplitude damping of strength gamma on every qubit."""
    if not 0 <= gamma <= 1:
        raise ValidationError(f"damping gamma {gamma} outside [0, 1]")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex)
    single = [k0, k1] if gamma > 0 else [k0]
    if n_qubits <= 3:
        return QuantumChannel(kraus=_tensor_power_kraus(single, n_qubits), check=False)
    one = QuantumChannel(kraus=single, check=False).choi
    choi = one
    for _ in range(n_qubits - 1):
        choi = _kron_choi(choi, one)
    return QuantumChannel(superop=choi_to_superop(choi), check=False)


def _kron_choi(ja: np.ndarray, jb: np.ndarray) -> np.ndarray:
    """Choi matrix of A kron B given the factors' Choi matrices."""
    da = int(round(np.sqrt(ja.shape[0])))
    db = int(round(np.sqrt(jb.shape[0])))
    t = np.kron(ja, jb).reshape(da, da, db, db, da, da, db, db)
    # (sa, aa, sb, ab) -> (sa, sb, aa, ab)
    t = t.transpose(0, 2, 1, 3, 4, 6, 5, 7)
    return t.reshape(da * db * da * db, -1)


def rotation_unitary(axis: str, angle: float) -> np.ndarray:
    P = PAULIS[axis.upper()]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * P


def coherent_rotation_channel(axis: str, angle: float, n_qubits: int = 1) -> QuantumChannel:
    """exp(-i angle/2 P) applied to every qubit."""
    if axis.upper() not in ("X", "Y", "Z"):
        raise ValidationError(f"rotation axis must be X, Y or Z, got {axis!r}")
    U = np.ones((1, 1), dtype=complex)
    for _ in range(n_qubits):
        U = np.kron(U, rotation_unitary(axis, angle))
    return unitary_channel(U)


# ---------------------------------------------------------------------------
# Random models (test and benchmark inputs)
# ---------------------------------------------------------------------------


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix with phase-fixed diagonal."""
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure_state(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PureState(v / np.linalg.norm(v))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_channel(dim: int, rng: np.random.Generator, n_kraus: int | None = None) -> QuantumChannel:
    """Random CPTP map from a Haar-random Stinespring isometry."""
    n_kraus = dim if n_kraus is None else n_kraus
    V = random_unitary(dim * n_kraus, rng)[:, :dim]
    ks = [V[k * dim:(k + 1) * dim, :] for k in range(n_kraus)]
    return QuantumChannel(kraus=ks)


# ---------------------------------------------------------------------------
# Gate sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateSet:
    """Native preparation, gates and readout of a register.

    ``gates`` holds explicitly defined channels. When ``library`` is true,
    labels of the standard gate vocabulary (see :mod:`qcvv.gates`) also
    resolve. ``gate_noise`` is applied after every gate, explicit or not.
    """

    prep: DensityMatrix
    meas: Povm
    gates: Mapping[str, QuantumChannel] = field(default_factory=dict)
    gate_noise: QuantumChannel | None = None
    library: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        d = self.prep.dim
        if self.meas.dim != d:
            raise ValidationError(f"POVM dim {self.meas.dim} does not match prep dim {d}")
        for label, ch in self.gates.items():
            if ch.dim != d:
                raise ValidationError(f"gate {label!r} has dim {ch.dim}, expected {d}")
        if self.gate_noise is not None and self.gate_noise.dim != d:
            raise ValidationError(f"gate noise dim {self.gate_noise.dim} does not match {d}")
        object.__setattr__(self, "gates", dict(self.gates))

    @property
    def dim(self) -> int:
        return self.prep.dim

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    def base(self, label: str) -> QuantumChannel:
        """The gate before ``gate_noise`` is attached."""
        if label in self.gates:
            return self.gates[label]
        if label in self._cache:
            return self._cache[label]
        if not self.library:
            raise KeyError(label)
        from .gates import standard_unitary

        U = standard_unitary(label, self.n_qubits)
        ch = QuantumChannel(kraus=[U], check=False)
        self._cache[label] = ch
        return ch

    def channel(self, label: str) -> QuantumChannel:
        """Full noisy channel executed for ``label``."""
        key = ("noisy", label)
        if key not in self._cache:
            ch = self.base(label)
            if self.gate_noise is not None:
                ch = compose_channels(self.gate_noise, ch)
            self._cache[key] = ch
        return self._cache[key]

    def labels(self) -> list[str]:
        out = list(self.gates)
        if self.library:
            from .gates import primitive_labels

            out += [lbl for lbl in primitive_labels(self.n_qubits) if lbl not in self.gates]
        return out

    @classmethod
    def ideal(cls, n_qubits: int) -> "GateSet":
        d = 2**n_qubits
        return cls(prep=DensityMatrix.basis(0, d), meas=Povm.computational(d))
