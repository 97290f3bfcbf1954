"""
Standard gate vocabulary resolved by label.

    I, Gi               identity on the whole register
    X:q Y:q Z:q         Paulis on qubit q
    H:q S:q Sdg:q       Hadamard, phase, inverse phase on qubit q
    CNOT:c,t  CZ:a,b    two-qubit entanglers
    C1:i  C2:i          element i of the enumerated 1- or 2-qubit Clifford group
"""

from __future__ import annotations

import functools

import numpy as np

from .errors import ValidationError
from .qmodel import H, S, X, Y, Z, embed_unitary

_SINGLE = {
    "X": X,
    "Y": Y,
    "Z": Z,
    "H": H,
    "S": S,
    "Sdg": S.conj().T,
    "I": np.eye(2, dtype=complex),
}
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def _qubits(text: str, label: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ValidationError(f"bad qubit list in gate label {label!r}") from None


@functools.lru_cache(maxsize=4096)
def _standard_unitary(label: str, n_qubits: int) -> np.ndarray:
    d = 2**n_qubits
    if label in ("I", "Gi"):
        return np.eye(d, dtype=complex)
    name, sep, rest = label.partition(":")
    if not sep:
        raise KeyError(label)
    if name in _SINGLE:
        qs = _qubits(rest, label)
        if len(qs) != 1:
            raise ValidationError(f"single-qubit gate {label!r} takes one qubit")
        return embed_unitary(_SINGLE[name], qs, n_qubits)
    if name in ("CNOT", "CZ"):
        qs = _qubits(rest, label)
        if len(qs) != 2:
            raise ValidationError(f"two-qubit gate {label!r} takes two qubits")
        return embed_unitary(_CNOT if name == "CNOT" else _CZ, qs, n_qubits)
    if name in ("C1", "C2"):
        from .clifford import clifford_group

        k = int(name[1])
        if k != n_qubits:
            raise ValidationError(f"{k}-qubit Clifford label {label!r} on a {n_qubits}-qubit register")
        group = clifford_group(k)
        idx = int(rest)
        if not 0 <= idx < group.order:
            raise KeyError(label)
        return group.unitary(idx)
    raise KeyError(label)


def standard_unitary(label: str, n_qubits: int) -> np.ndarray:
    """Ideal unitary for ``label``; KeyError when the label is not in the vocabulary."""
    U = _standard_unitary(label, n_qubits)
    U.setflags(write=False)
    return U


def is_standard_label(label: str, n_qubits: int) -> bool:
    try:
        standard_unitary(label, n_qubits)
    except (KeyError, ValidationError):
        return False
    return True


def primitive_labels(n_qubits: int) -> list[str]:
    """Fixed primitive gates of the vocabulary (no Clifford-index labels)."""
    out = ["I"]
    for q in range(n_qubits):
        out += [f"{g}:{q}" for g in ("X", "Y", "Z", "H", "S", "Sdg")]
    for a in range(n_qubits):
        for b in range(n_qubits):
            if a != b:
                out.append(f"CNOT:{a},{b}")
            if a < b:
                out.append(f"CZ:{a},{b}")
    return out


# Basis changes used by tomography and Pauli measurements: the listed labels,
# applied in order, rotate the named Pauli's eigenbasis onto Z.
MEAS_ROTATION = {"X": ("H",), "Y": ("Sdg", "H"), "Z": (), "I": ()}
# Preparation fiducials taking |0> to |0>, |1>, |+>, |+i>.
PREP_FIDUCIALS = {"0": (), "1": ("X",), "+": ("H",), "+i": ("H", "S")}


def rotation_labels(pauli: str) -> list[str]:
    """Labels rotating each qubit's measured Pauli onto Z (character j -> qubit j)."""
    out = []
    for q, ch in enumerate(pauli):
        out += [f"{g}:{q}" for g in MEAS_ROTATION[ch]]
    return out


def circuit_unitary(labels, n_qubits: int) -> np.ndarray:
    U = np.eye(2**n_qubits, dtype=complex)
    for lbl in labels:
        U = standard_unitary(lbl, n_qubits) @ U
    return U
