"""
JSON artifacts exchanged by the command-line pipeline.

Every file is ``{"format_version": "1", "kind": ..., "payload": ...}`` written
with sorted keys and shortest round-trip floats, so identical content always
serializes to identical bytes. Complex numbers are ``[re, im]`` pairs.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from typing import Any

import numpy as np

from .errors import ValidationError
from .qmodel import DensityMatrix, GateSet, Povm, QuantumChannel
from .simcore import Circuit, CountData

FORMAT_VERSION = "1"
KINDS = ("gateset", "design", "counts", "report")


# ---------------------------------------------------------------------------
# Encoding helpers
# ---------------------------------------------------------------------------


def encode_complex_matrix(m) -> list:
    a = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def decode_complex_matrix(obj, where: str = "matrix") -> np.ndarray:
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a matrix of [re, im] pairs") from None
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{where}: expected a square matrix of [re, im] pairs, got shape {a.shape}")
    return a[..., 0] + 1j * a[..., 1]


def encode_real_matrix(m) -> list:
    return [[float(x) for x in row] for row in np.asarray(m, dtype=float)]


def plain(obj: Any) -> Any:
    """Convert numpy scalars/arrays and tuples to JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return [plain(obj.real), plain(obj.imag)]
    return obj


def dumps(kind: str, payload: dict) -> str:
    if kind not in KINDS:
        raise ValidationError(f"unknown artifact kind {kind!r}")
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "payload": plain(payload)}
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def loads(text: str, expected_kind: str | None = None, source: str = "<string>") -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{source}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{source}: top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(f"{source}: unsupported format_version {doc.get('format_version')!r}")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ValidationError(f"{source}: unknown kind {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise ValidationError(f"{source}: expected a {expected_kind} file, got {kind}")
    if not isinstance(doc.get("payload"), dict):
        raise ValidationError(f"{source}: field 'payload' must be an object")
    return doc


def write_artifact(path: str, kind: str, payload: dict) -> str:
    """Serialize and atomically replace ``path``; returns the text written."""
    text = dumps(kind, payload)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return text


def read_artifact(path: str, expected_kind: str | None = None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text, expected_kind, source=path)


def sha256_file(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _field(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    return obj[key]


# ---------------------------------------------------------------------------
# Gate sets
# ---------------------------------------------------------------------------


def gateset_to_payload(gs: GateSet, noise: list[str] | None = None) -> dict:
    return {
        "n_qubits": gs.n_qubits,
        "prep": encode_complex_matrix(gs.prep.mat),
        "meas": [encode_complex_matrix(e) for e in gs.meas.effects],
        "gates": {label: {"superop": encode_complex_matrix(ch.superop)} for label, ch in gs.gates.items()},
        "gate_noise": None if gs.gate_noise is None else {"superop": encode_complex_matrix(gs.gate_noise.superop)},
        "library": gs.library,
        "noise": list(noise or []),
    }


def _channel(obj, where: str) -> QuantumChannel:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object with 'superop'")
    return QuantumChannel(superop=decode_complex_matrix(_field(obj, "superop", where), f"{where}.superop"))


def gateset_from_payload(p: dict, source: str = "gateset") -> GateSet:
    try:
        prep = DensityMatrix(decode_complex_matrix(_field(p, "prep", source), f"{source}.prep"))
        meas = Povm(tuple(decode_complex_matrix(e, f"{source}.meas[{k}]") for k, e in enumerate(_field(p, "meas", source))))
        gates = {str(k): _channel(v, f"{source}.gates.{k}") for k, v in dict(p.get("gates") or {}).items()}
        noise = p.get("gate_noise")
        gate_noise = None if noise is None else _channel(noise, f"{source}.gate_noise")
        gs = GateSet(prep=prep, meas=meas, gates=gates, gate_noise=gate_noise, library=bool(p.get("library", True)))
    except ValidationError as exc:
        raise ValidationError(f"{source}: {exc}") from None
    if "n_qubits" in p and int(p["n_qubits"]) != gs.n_qubits:
        raise ValidationError(f"{source}: n_qubits {p['n_qubits']} does not match matrices ({gs.n_qubits})")
    return gs


# ---------------------------------------------------------------------------
# Circuits and counts
# ---------------------------------------------------------------------------


def circuit_to_record(c: Circuit) -> dict:
    rec = {"id": c.circuit_id, "labels": list(c.layers)}
    if c.definitions:
        rec["definitions"] = {
            k: {"qubits": list(q), "unitary": encode_complex_matrix(U)} for k, (q, U) in c.definitions.items()
        }
    return rec


def circuit_from_record(rec: dict, n_qubits: int, where: str) -> Circuit:
    if not isinstance(rec, dict):
        raise ValidationError(f"{where}: circuit record must be an object")
    cid = _field(rec, "id", where)
    labels = _field(rec, "labels", where)
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ValidationError(f"{where} ({cid}): 'labels' must be a list of strings")
    defs = {}
    for k, v in dict(rec.get("definitions") or {}).items():
        defs[k] = (tuple(int(q) for q in _field(v, "qubits", f"{where}.definitions.{k}")),
                   decode_complex_matrix(_field(v, "unitary", f"{where}.definitions.{k}"), f"{where}.definitions.{k}"))
    return Circuit(n_qubits, tuple(labels), str(cid), defs)


def counts_to_record(cd: CountData, n_outcomes: int) -> dict:
    if cd.exact:
        return {"id": cd.circuit_id, "shots": 0, "probs": list(cd.probs)}
    return {"id": cd.circuit_id, "shots": cd.shots, "counts": [int(x) for x in cd.weights(n_outcomes)]}


def counts_from_record(rec: dict, where: str) -> CountData:
    if not isinstance(rec, dict):
        raise ValidationError(f"{where}: count record must be an object")
    cid = str(_field(rec, "id", where))
    try:
        shots = int(_field(rec, "shots", f"{where} ({cid})"))
        if "probs" in rec and rec["probs"] is not None:
            return CountData(cid, shots, {}, tuple(float(x) for x in rec["probs"]))
        counts = _field(rec, "counts", f"{where} ({cid})")
        if not isinstance(counts, list):
            raise ValidationError(f"{where} ({cid}): 'counts' must be a list")
        return CountData(cid, shots, {k: int(v) for k, v in enumerate(counts)})
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where} ({cid}): {exc}") from None
