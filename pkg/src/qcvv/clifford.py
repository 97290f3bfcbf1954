"""
Clifford group elements as symplectic tableaux with phase bits.

A Pauli operator is carried as ``(k, x, z)`` meaning ``i**k * X^x Z^z`` where
``x`` and ``z`` are integer bitmasks (bit j <-> qubit j) and, on each qubit,
X is ordered before Z. Products then need only one parity:

    (k1, x1, z1) * (k2, x2, z2) = (k1 + k2 + 2|z1 & x2|, x1 ^ x2, z1 ^ z2)

A Clifford stores the images of X_0..X_{n-1}, Z_0..Z_{n-1} under conjugation
``P -> C P C^dagger``. Each image is Hermitian: ``(-1)**r * i**|x & z| X^x Z^z``.
"""

from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError


def _pc(v: int) -> int:
    return bin(v).count("1")


def pauli_mul(a: tuple[int, int, int], b: tuple[int, int, int]) -> tuple[int, int, int]:
    k1, x1, z1 = a
    k2, x2, z2 = b
    return ((k1 + k2 + 2 * _pc(z1 & x2)) % 4, x1 ^ x2, z1 ^ z2)


def pauli_from_label(label: str) -> tuple[int, int, int]:
    """Parse ``"+XZ"``/``"-YY"``/``"ZI"`` into ``(k, x, z)`` (character j -> qubit j)."""
    sign = 0
    if label[:1] in "+-":
        sign = 2 if label[0] == "-" else 0
        label = label[1:]
    x = z = 0
    for j, ch in enumerate(label):
        if ch == "X":
            x |= 1 << j
        elif ch == "Z":
            z |= 1 << j
        elif ch == "Y":
            x |= 1 << j
            z |= 1 << j
        elif ch != "I":
            raise ValidationError(f"bad Pauli character {ch!r}")
    return ((sign + _pc(x & z)) % 4, x, z)


def pauli_to_label(p: tuple[int, int, int], n_qubits: int) -> tuple[int, str]:
    """Return ``(sign, label)`` for a Hermitian Pauli; sign is +1 or -1."""
    k, x, z = p
    rel = (k - _pc(x & z)) % 4
    if rel % 2:
        raise ValidationError("Pauli operator is not Hermitian (phase +-i)")
    chars = []
    for j in range(n_qubits):
        xb, zb = (x >> j) & 1, (z >> j) & 1
        chars.append("IXZY"[xb + 2 * zb])
    return (1 if rel == 0 else -1), "".join(chars)


def paulis_commute(a: tuple[int, int, int], b: tuple[int, int, int]) -> bool:
    return (_pc(a[1] & b[2]) + _pc(a[2] & b[1])) % 2 == 0


def pauli_matrix(p: tuple[int, int, int], n_qubits: int) -> np.ndarray:
    k, x, z = p
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Z = np.array([[1, 0], [0, -1]], dtype=complex)
    out = np.ones((1, 1), dtype=complex)
    for j in range(n_qubits):
        f = np.eye(2, dtype=complex)
        if (x >> j) & 1:
            f = X @ f
        if (z >> j) & 1:
            f = f @ Z
        out = np.kron(out, f)
    return (1j**k) * out


@dataclass(frozen=True)
class CliffordElement:
    """n-qubit Clifford modulo global phase.

    ``rows`` holds ``(x, z, r)`` for the images of X_0.., then Z_0.. .
    """

    n_qubits: int
    rows: tuple[tuple[int, int, int], ...]

    @classmethod
    def identity(cls, n_qubits: int) -> "CliffordElement":
        rows = tuple((1 << j, 0, 0) for j in range(n_qubits)) + tuple((0, 1 << j, 0) for j in range(n_qubits))
        return cls(n_qubits, rows)

    @property
    def key(self) -> tuple:
        return self.rows

    def _image(self, row: int) -> tuple[int, int, int]:
        x, z, r = self.rows[row]
        return ((2 * r + _pc(x & z)) % 4, x, z)

    def conjugate(self, p: tuple[int, int, int]) -> tuple[int, int, int]:
        """C P C^dagger for a Pauli ``(k, x, z)``."""
        k, x, z = p
        acc = (k, 0, 0)
        n = self.n_qubits
        for j in range(n):
            if (x >> j) & 1:
                acc = pauli_mul(acc, self._image(j))
        for j in range(n):
            if (z >> j) & 1:
                acc = pauli_mul(acc, self._image(n + j))
        return acc

    def then(self, other: "CliffordElement") -> "CliffordElement":
        """The element applying ``self`` first and ``other`` second."""
        return compose(other, self)

    @property
    def symplectic(self) -> np.ndarray:
        """2n x 2n binary matrix; row i is the (x | z) image of generator i."""
        n = self.n_qubits
        m = np.zeros((2 * n, 2 * n), dtype=np.uint8)
        for i, (x, z, _) in enumerate(self.rows):
            for j in range(n):
                m[i, j] = (x >> j) & 1
                m[i, n + j] = (z >> j) & 1
        return m

    @property
    def phase(self) -> np.ndarray:
        return np.array([r for _, _, r in self.rows], dtype=np.uint8)

    def is_symplectic(self) -> bool:
        n = self.n_qubits
        S = self.symplectic.astype(int)
        omega = np.block([[np.zeros((n, n), int), np.eye(n, dtype=int)], [np.eye(n, dtype=int), np.zeros((n, n), int)]])
        return bool(np.array_equal((S @ omega @ S.T) % 2, omega))

    def matches_unitary(self, U: np.ndarray, atol: float = 1e-9) -> bool:
        """True when U maps every generator to the tableau's image (up to global phase)."""
        n = self.n_qubits
        gens = [(0, 1 << j, 0) for j in range(n)] + [(0, 0, 1 << j) for j in range(n)]
        for i, g in enumerate(gens):
            lhs = U @ pauli_matrix(g, n) @ U.conj().T
            if np.max(np.abs(lhs - pauli_matrix(self._image(i), n))) > atol:
                return False
        return True


def compose(g2: CliffordElement, g1: CliffordElement) -> CliffordElement:
    """g2 after g1, i.e. conjugation by U2 U1."""
    if g1.n_qubits != g2.n_qubits:
        raise ValidationError("cannot compose Cliffords on different qubit counts")
    rows = []
    for i in range(2 * g1.n_qubits):
        k, x, z = g2.conjugate(g1._image(i))
        rel = (k - _pc(x & z)) % 4
        rows.append((x, z, rel // 2))
    return CliffordElement(g1.n_qubits, tuple(rows))


def _symplectic_inverse_rows(g: CliffordElement) -> tuple:
    n = g.n_qubits
    S = g.symplectic.astype(int)
    omega = np.block([[np.zeros((n, n), int), np.eye(n, dtype=int)], [np.eye(n, dtype=int), np.zeros((n, n), int)]])
    Sinv = (omega @ S.T @ omega) % 2
    rows = []
    for i in range(2 * n):
        x = sum(int(Sinv[i, j]) << j for j in range(n))
        z = sum(int(Sinv[i, n + j]) << j for j in range(n))
        rows.append((x, z, 0))
    return tuple(rows)


def invert(g: CliffordElement) -> CliffordElement:
    """Exact inverse: symplectic inverse plus a Pauli frame fixing the phases."""
    n = g.n_qubits
    h = CliffordElement(n, _symplectic_inverse_rows(g))
    d = compose(g, h)  # identity symplectic part, leftover signs
    frame = CliffordElement(n, tuple((x, z, rd) for (x, z, _), (_, _, rd)
                                     in zip(CliffordElement.identity(n).rows, d.rows)))
    return compose(h, frame)


def from_unitary(U: np.ndarray, n_qubits: int, atol: float = 1e-9) -> CliffordElement:
    """Tableau of a Clifford unitary, found by Pauli decomposition of its conjugation action."""
    d = 2**n_qubits
    U = np.asarray(U, dtype=complex)
    rows = []
    gens = [(0, 1 << j, 0) for j in range(n_qubits)] + [(0, 0, 1 << j) for j in range(n_qubits)]
    for g in gens:
        M = U @ pauli_matrix(g, n_qubits) @ U.conj().T
        found = None
        for x in range(d):
            for z in range(d):
                base = (_pc(x & z) % 4, x, z)
                c = np.trace(pauli_matrix(base, n_qubits).conj().T @ M) / d
                if abs(abs(c) - 1) < atol:
                    if abs(c - 1) < atol:
                        found = (x, z, 0)
                    elif abs(c + 1) < atol:
                        found = (x, z, 1)
                    break
            if found:
                break
        if found is None:
            raise ValidationError("matrix is not a Clifford unitary")
        rows.append(found)
    return CliffordElement(n_qubits, tuple(rows))


def _generators(n_qubits: int) -> list[np.ndarray]:
    H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    S = np.diag([1, 1j])
    I = np.eye(2)
    if n_qubits == 1:
        return [H, S]
    if n_qubits == 2:
        cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
        return [np.kron(H, I), np.kron(I, H), np.kron(S, I), np.kron(I, S), cnot]
    raise ValidationError(f"Clifford group supported for 1 or 2 qubits, got {n_qubits}")


class CliffordGroup:
    """Enumerated n-qubit Clifford group (n = 1 or 2) with tableau algebra.

    Elements are indexed in breadth-first order from the identity (index 0);
    each carries the unitary obtained by multiplying generator matrices
    along its discovery path.
    """

    def __init__(self, n_qubits: int):
        gen_us = _generators(n_qubits)
        gens = [from_unitary(u, n_qubits) for u in gen_us]
        ident = CliffordElement.identity(n_qubits)
        self.n_qubits = n_qubits
        self.elements: list[CliffordElement] = [ident]
        self._unitaries: list[np.ndarray] = [np.eye(2**n_qubits, dtype=complex)]
        self.index: dict[tuple, int] = {ident.key: 0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for g, gu in zip(gens, gen_us):
                new = compose(g, self.elements[i])
                if new.key not in self.index:
                    self.index[new.key] = len(self.elements)
                    self.elements.append(new)
                    self._unitaries.append(gu @ self._unitaries[i])
                    queue.append(len(self.elements) - 1)
        for u in self._unitaries:
            u.setflags(write=False)

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return self.order

    def lookup(self, g: CliffordElement) -> int:
        return self.index[g.key]

    def compose(self, i2: int, i1: int) -> int:
        return self.lookup(compose(self.elements[i2], self.elements[i1]))

    def inverse(self, i: int) -> int:
        return self.lookup(invert(self.elements[i]))

    def compose_sequence(self, indices: Sequence[int]) -> CliffordElement:
        """Group element of applying ``indices`` in order (first index first)."""
        acc = CliffordElement.identity(self.n_qubits)
        for i in indices:
            acc = compose(self.elements[i], acc)
        return acc

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.integers(0, self.order, size=size)

    def unitary(self, i: int) -> np.ndarray:
        return self._unitaries[i]

    def label(self, i: int) -> str:
        return f"C{self.n_qubits}:{i}"

    def index_of_label(self, label: str) -> int:
        prefix, _, idx = label.partition(":")
        if prefix != f"C{self.n_qubits}" or not idx.isdigit() or int(idx) >= self.order:
            raise ValidationError(f"{label!r} is not an element label of C{self.n_qubits}")
        return int(idx)

    def channel(self, i: int):
        from .qmodel import unitary_channel

        return unitary_channel(self._unitaries[i])


@functools.lru_cache(maxsize=None)
def clifford_group(n_qubits: int) -> CliffordGroup:
    if n_qubits not in (1, 2):
        raise ValidationError(f"Clifford group supported for 1 or 2 qubits, got {n_qubits}")
    return CliffordGroup(n_qubits)
