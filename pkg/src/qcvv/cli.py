"""
Command-line pipeline: ``design`` -> ``simulate`` -> ``analyze``, plus ``metrics``
and ``gateset`` for building and comparing noise models.

Exit codes: 0 success, 2 invalid input, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import ConvergenceError, ValidationError
from .gates import circuit_unitary, primitive_labels, standard_unitary
from .holistic import Z_975, QV_THRESHOLD, analyze_qv, generate_qv_circuits
from .io import (
    circuit_from_record,
    circuit_to_record,
    counts_from_record,
    counts_to_record,
    decode_complex_matrix,
    dumps,
    encode_complex_matrix,
    encode_real_matrix,
    gateset_from_payload,
    gateset_to_payload,
    read_artifact,
    sha256_file,
    write_artifact,
)
from .metrics import (
    avg_gate_fidelity,
    diamond_distance_bounds,
    fidelity_matrices,
    process_fidelity,
    trace_distance_matrices,
)
from .qmodel import GateSet, QuantumChannel, compose_channels, unitary_channel
from .rb import RbDesign, fit_decay, rb_points_from_counts, sample_rb_sequences
from .simcore import NoiseSpec, derive_seed, noisy_gateset, run_design
from .tomo import (
    linear_inversion_process,
    linear_inversion_state,
    mle_process,
    mle_state,
    process_loglikelihood,
    standard_process_design,
    standard_state_design,
    state_loglikelihood,
)

PROTOCOLS = ("state_tomo", "process_tomo", "rb", "qv")
METRICS = ("state_fidelity", "trace_distance", "process_fidelity", "avg_gate_fidelity", "diamond_bounds")


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"{what} must be a comma-separated list of integers, got {text!r}") from None


def _label_list(text: str | None) -> list[str]:
    # gate labels contain commas ("CNOT:0,1"), so lists are separated by ';'
    return [t.strip() for t in (text or "").split(";") if t.strip()]


def _emit(kind: str, payload: dict, out: str | None) -> None:
    if out:
        write_artifact(out, kind, payload)
    else:
        sys.stdout.write(dumps(kind, payload))


# ---------------------------------------------------------------------------
# Protocol construction (shared by design and analyze)
# ---------------------------------------------------------------------------


def _protocol_params(args) -> dict:
    protocol = args.protocol
    if protocol is None:
        raise ValidationError("--protocol is required")
    qubits = _int_list(args.qubits, "--qubits") if args.qubits else []
    if protocol != "qv" and len(qubits) != 1:
        raise ValidationError(f"{protocol} needs exactly one --qubits value")
    params: dict = {"seed": int(args.seed)}
    if protocol == "state_tomo":
        params.update(n_qubits=qubits[0], prep=_label_list(args.prep))
    elif protocol == "process_tomo":
        params.update(n_qubits=qubits[0], target=_label_list(args.gate) or ["I"])
    elif protocol == "rb":
        if not args.lengths:
            raise ValidationError("rb needs --lengths")
        params.update(n_qubits=qubits[0], lengths=_int_list(args.lengths, "--lengths"), k=int(args.k))
    else:
        if not qubits:
            raise ValidationError("qv needs --qubits (one width or a comma-separated list)")
        params.update(widths=qubits, circuits=int(args.circuits))
    return params


def _build(protocol: str, params: dict):
    """Return (circuits, context) for a protocol's parameters."""
    if protocol == "state_tomo":
        design = standard_state_design(params["n_qubits"])
        return design.circuits(prefix=params["prep"]), design
    if protocol == "process_tomo":
        design = standard_process_design(params["n_qubits"], params["target"])
        return design.circuits(), design
    if protocol == "rb":
        design = RbDesign(params["n_qubits"], tuple(params["lengths"]), params["k"], params["seed"])
        return sample_rb_sequences(design), design
    if protocol == "qv":
        qcs = []
        for n in params["widths"]:
            qcs += generate_qv_circuits(n, params["circuits"], derive_seed(params["seed"], n))
        return [qc.to_circuit() for qc in qcs], qcs
    raise ValidationError(f"unknown protocol {protocol!r}")


def _design_payload(protocol: str, params: dict) -> dict:
    circuits, ctx = _build(protocol, params)
    records = []
    for c in circuits:
        rec = circuit_to_record(c)
        rec["n_qubits"] = c.n_qubits
        records.append(rec)
    payload = {"protocol": protocol, "params": params, "circuits": records}
    if protocol in ("state_tomo", "process_tomo"):
        payload["n_effects"] = len(ctx.effects)
    if protocol == "rb":
        payload["sequence_lengths"] = ctx.circuit_lengths()
    return payload


def _load_design(path: str):
    doc = read_artifact(path, "design")
    p = doc["payload"]
    protocol = p.get("protocol")
    if protocol not in PROTOCOLS:
        raise ValidationError(f"{path}: unknown protocol {protocol!r}")
    params = p.get("params")
    if not isinstance(params, dict):
        raise ValidationError(f"{path}: missing field 'params'")
    recs = p.get("circuits")
    if not isinstance(recs, list):
        raise ValidationError(f"{path}: field 'circuits' must be a list")
    circuits = []
    for i, rec in enumerate(recs):
        n = rec.get("n_qubits", params.get("n_qubits")) if isinstance(rec, dict) else None
        if not isinstance(n, int) or n < 1:
            raise ValidationError(f"{path}: circuits[{i}] lacks a valid n_qubits")
        circuits.append(circuit_from_record(rec, n, f"{path}: circuits[{i}]"))
    return protocol, params, circuits


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_design(args) -> int:
    params = _protocol_params(args)
    if args.protocol == "qv" and params["circuits"] < 2:
        raise ValidationError("qv needs --circuits >= 2")
    _emit("design", _design_payload(args.protocol, params), args.out)
    return 0


def cmd_gateset(args) -> int:
    qubits = _int_list(args.qubits, "--qubits") if args.qubits else []
    if len(qubits) != 1:
        raise ValidationError("gateset needs exactly one --qubits value")
    n = qubits[0]
    noises = [NoiseSpec.parse(t) for t in args.noise]
    gs = noisy_gateset(n, noises)
    gates = {}
    for item in args.define:
        name, sep, labels = item.partition("=")
        if not sep or not name:
            raise ValidationError(f"--define expects NAME=LABELS, got {item!r}")
        try:
            gates[name] = unitary_channel(circuit_unitary(_label_list(labels), n))
        except KeyError as exc:
            raise ValidationError(f"unknown gate label {exc.args[0]!r} in --define") from None
    if gates:
        gs = GateSet(prep=gs.prep, meas=gs.meas, gates=gates, gate_noise=gs.gate_noise, library=gs.library)
    _emit("gateset", gateset_to_payload(gs, [nz.to_text() for nz in noises]), args.out)
    return 0


def cmd_simulate(args) -> int:
    protocol, params, circuits = _load_design(args.design)
    if args.gateset and args.noise:
        raise ValidationError("give either --gateset or --noise, not both")
    if not args.exact and args.shots < 1:
        raise ValidationError("--shots must be >= 1 unless --exact is set")
    widths = sorted({c.n_qubits for c in circuits})
    if args.gateset:
        gs = gateset_from_payload(read_artifact(args.gateset, "gateset")["payload"], args.gateset)
        bad = [n for n in widths if n != gs.n_qubits]
        if bad:
            raise ValidationError(f"gate set has {gs.n_qubits} qubits, design needs {bad[0]}")
        models = {gs.n_qubits: gs}
        noise_text: list[str] = []
    else:
        noises = [NoiseSpec.parse(t) for t in args.noise]
        models = {n: noisy_gateset(n, noises) for n in widths}
        noise_text = [nz.to_text() for nz in noises]
    data = run_design(models, circuits, args.shots, args.seed, exact=args.exact)
    payload = {
        "protocol": protocol,
        "design_sha256": sha256_file(args.design),
        "params": params,
        "simulation": {
            "shots": 0 if args.exact else int(args.shots),
            "seed": int(args.seed),
            "exact": bool(args.exact),
            "noise": noise_text,
            "gateset_sha256": sha256_file(args.gateset) if args.gateset else None,
        },
        "records": [counts_to_record(cd, 2**c.n_qubits) for c, cd in zip(circuits, data)],
    }
    _emit("counts", payload, args.out)
    return 0


def _load_counts(path: str):
    doc = read_artifact(path, "counts")
    p = doc["payload"]
    recs = p.get("records")
    if not isinstance(recs, list):
        raise ValidationError(f"{path}: field 'records' must be a list")
    return p, [counts_from_record(r, f"{path}: records[{i}]") for i, r in enumerate(recs)]


def _ideal_state(n: int, prep: list[str]) -> np.ndarray:
    U = circuit_unitary(prep, n)
    return np.outer(U[:, 0], U[:, 0].conj())


def _analyze_state(design, data, params, method, max_iter):
    est = mle_state(design, data, max_iter=max_iter) if method == "mle" else linear_inversion_state(design, data)
    ll = est.loglikelihood if est.loglikelihood is not None else state_loglikelihood(design, data, est.rho_hat)
    target = _ideal_state(params["n_qubits"], params["prep"])
    return {
        "method": est.method,
        "rho_hat": encode_complex_matrix(est.rho_hat),
        "eigenvalues": np.linalg.eigvalsh(est.rho_hat),
        "physical": est.physical,
        "loglikelihood": ll,
        "iterations": est.iterations,
        "target_prep": params["prep"],
        "fidelity_to_target": fidelity_matrices(est.rho_hat, target),
        "trace_distance_to_target": trace_distance_matrices(est.rho_hat, target),
    }


def _analyze_process(design, data, params, method, max_iter):
    est = mle_process(design, data, max_iter=max_iter) if method == "mle" else linear_inversion_process(design, data)
    ll = est.loglikelihood if est.loglikelihood is not None else process_loglikelihood(design, data, est.superop_hat)
    ideal = unitary_channel(circuit_unitary(params["target"], params["n_qubits"]))
    f_pro = fidelity_matrices(est.choi, ideal.choi)
    return {
        "method": est.method,
        "superop_hat": encode_complex_matrix(est.superop_hat),
        "ptm": encode_real_matrix(np.real(est.ptm)),
        "choi_eigenvalues": np.linalg.eigvalsh(est.choi),
        "physical": est.physical,
        "tp_error": est.tp_error,
        "loglikelihood": ll,
        "iterations": est.iterations,
        "target": params["target"],
        "process_fidelity_to_target": f_pro,
        "avg_gate_fidelity_to_target": avg_gate_fidelity(f_pro, design.dim),
    }


def _analyze_rb(design: RbDesign, data, weighted: bool):
    points = rb_points_from_counts(design, data, survival_index=0)
    fit = fit_decay(points, d=design.dim, sigmas=[p.sem for p in points] if weighted else None)
    return {
        "lengths": [p.m for p in points],
        "survival_mean": [p.mean for p in points],
        "survival_sem": [p.sem for p in points],
        "sequences_per_length": [p.k for p in points],
        "fit": {"A": fit.A, "B": fit.B, "p": fit.p, "r": fit.r, "stderr_p": fit.stderr_p,
                "n_points": fit.n_points, "d": fit.d, "weighted": weighted},
        "fit_curve": [fit.A * fit.p**p.m + fit.B for p in points],
    }


def _analyze_qv(qcs, data):
    res = analyze_qv(qcs, data)
    return {
        "qv": res.qv,
        "threshold": QV_THRESHOLD,
        "z_one_sided": Z_975,
        "levels": [
            {"n": lv.n, "mean_hop": lv.mean_hop, "lcb": lv.lcb, "pass": lv.passed,
             "n_circuits": lv.n_circuits, "hops": list(lv.hops)}
            for lv in res.levels
        ],
    }


def cmd_analyze(args) -> int:
    protocol, params, circuits = _load_design(args.design)
    if args.protocol and args.protocol != protocol:
        raise ValidationError(f"--protocol {args.protocol} does not match design protocol {protocol}")
    counts_meta, data = _load_counts(args.counts)
    expected, ctx = _build(protocol, params)
    if [circuit_to_record(c) for c in expected] != [circuit_to_record(c) for c in circuits]:
        raise ValidationError(f"{args.design}: circuits do not match the design parameters")
    ids = [c.circuit_id for c in circuits]
    got = [cd.circuit_id for cd in data]
    if ids != got:
        missing = next((a for a, b in zip(ids, got) if a != b), None) if len(ids) == len(got) else None
        detail = f"first mismatch at {missing!r}" if missing else f"{len(got)} records for {len(ids)} circuits"
        raise ValidationError(f"counts do not align with design: {detail}")
    if protocol == "state_tomo":
        result = _analyze_state(ctx, data, params, args.method, args.max_iter)
    elif protocol == "process_tomo":
        result = _analyze_process(ctx, data, params, args.method, args.max_iter)
    elif protocol == "rb":
        result = _analyze_rb(ctx, data, args.weighted)
    else:
        result = _analyze_qv(ctx, data)
    payload = {
        "protocol": protocol,
        "invocation": {
            "command": "analyze",
            "method": args.method if protocol in ("state_tomo", "process_tomo") else None,
            "max_iter": args.max_iter if args.method == "mle" and protocol in ("state_tomo", "process_tomo") else None,
            "weighted": bool(args.weighted) if protocol == "rb" else None,
            "design_params": params,
            "design_sha256": sha256_file(args.design),
            "counts_sha256": sha256_file(args.counts),
            "simulation": counts_meta.get("simulation"),
            "version": __version__,
        },
        "result": result,
    }
    _emit("report", payload, args.out)
    return 0


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


class _Model:
    """State and/or labelled channels extracted from a gateset file or a tomography report."""

    def __init__(self, path: str):
        doc = read_artifact(path)
        kind, p = doc["kind"], doc["payload"]
        self.path = path
        self.gateset: GateSet | None = None
        self.state: np.ndarray | None = None
        self.channels: dict[str, QuantumChannel] = {}
        if kind == "gateset":
            self.gateset = gateset_from_payload(p, path)
            self.state = np.array(self.gateset.prep.mat)
        elif kind == "report" and p.get("protocol") == "state_tomo":
            self.state = decode_complex_matrix(p["result"]["rho_hat"], f"{path}: rho_hat")
        elif kind == "report" and p.get("protocol") == "process_tomo":
            label = ";".join(p["result"]["target"])
            S = decode_complex_matrix(p["result"]["superop_hat"], f"{path}: superop_hat")
            self.channels[label] = QuantumChannel(superop=S, atol=1e-6)
        else:
            raise ValidationError(f"{path}: {kind} files carry no state or channel model")

    @property
    def dim(self) -> int:
        if self.state is not None:
            return self.state.shape[0]
        return next(iter(self.channels.values())).dim

    def explicit_labels(self) -> list[str]:
        return list(self.gateset.gates) if self.gateset is not None else list(self.channels)

    def channel(self, label: str) -> QuantumChannel:
        if label in self.channels:
            return self.channels[label]
        if self.gateset is None:
            raise ValidationError(f"{self.path}: no channel for label {label!r}")
        if label not in self.gateset.gates:
            try:
                standard_unitary(label, self.gateset.n_qubits)
            except (KeyError, ValidationError):
                raise ValidationError(f"{self.path}: unknown gate label {label!r}") from None
        return self.gateset.channel(label)


def _channel_for(model: _Model, label: str) -> QuantumChannel:
    """Channel for ``label``; ';'-joined sequences (process reports) are composed gate by gate."""
    if ";" in label and model.gateset is not None and label not in model.gateset.gates:
        ch = None
        for part in label.split(";"):
            nxt = model.channel(part)
            ch = nxt if ch is None else compose_channels(nxt, ch)
        return ch
    return model.channel(label)


def cmd_metrics(args) -> int:
    a, b = _Model(args.model_a), _Model(args.model_b)
    if a.dim != b.dim:
        raise ValidationError(f"dimension mismatch: {a.dim} vs {b.dim}")
    which = [w.strip() for w in args.which.split(",") if w.strip()] if args.which else list(METRICS)
    unknown = [w for w in which if w not in METRICS]
    if unknown:
        raise ValidationError(f"unknown metric {unknown[0]!r}; choose from {', '.join(METRICS)}")
    state_metrics = [w for w in which if w in ("state_fidelity", "trace_distance")]
    chan_metrics = [w for w in which if w not in state_metrics]
    result: dict = {}
    if state_metrics:
        if a.state is None or b.state is None:
            raise ValidationError("state metrics requested but a model has no state")
        states = {}
        if "state_fidelity" in state_metrics:
            states["state_fidelity"] = fidelity_matrices(a.state, b.state)
        if "trace_distance" in state_metrics:
            states["trace_distance"] = trace_distance_matrices(a.state, b.state)
        result["state"] = states
    if chan_metrics:
        if args.labels:
            labels = [t.strip() for t in args.labels.split("|") if t.strip()]
        else:
            ea, eb = a.explicit_labels(), b.explicit_labels()
            labels = [x for x in ea if x in eb] or [x for x in (ea or eb)]
            if not labels:
                if a.gateset is None or b.gateset is None:
                    raise ValidationError("channel metrics requested but the models share no gate labels")
                labels = primitive_labels(a.gateset.n_qubits)
        gates = {}
        for label in labels:
            ga, gb = _channel_for(a, label), _channel_for(b, label)
            entry: dict = {}
            f_pro = process_fidelity(ga, gb)
            if "process_fidelity" in chan_metrics:
                entry["process_fidelity"] = f_pro
            if "avg_gate_fidelity" in chan_metrics:
                entry["avg_gate_fidelity"] = avg_gate_fidelity(f_pro, ga.dim)
            if "diamond_bounds" in chan_metrics:
                bounds = diamond_distance_bounds(ga, gb, n_restarts=args.restarts, seed=args.seed)
                entry["diamond_bounds"] = [bounds.lower, bounds.upper]
            gates[label] = entry
        result["gates"] = gates
    payload = {
        "protocol": "metrics",
        "invocation": {
            "command": "metrics",
            "which": which,
            "labels": args.labels,
            "restarts": args.restarts,
            "seed": args.seed,
            "model_a_sha256": sha256_file(args.model_a),
            "model_b_sha256": sha256_file(args.model_b),
            "version": __version__,
        },
        "result": result,
    }
    _emit("report", payload, args.out)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcvv", description="Simulated QCVV pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common_protocol(p, required=True):
        p.add_argument("--protocol", choices=PROTOCOLS, required=required)

    p = sub.add_parser("design", help="write an experiment design")
    common_protocol(p)
    p.add_argument("--qubits", help="register width; for qv, a comma-separated list of widths")
    p.add_argument("--lengths", help="rb sequence lengths, comma-separated")
    p.add_argument("--k", type=int, default=30, help="rb sequences per length")
    p.add_argument("--circuits", type=int, default=100, help="qv circuits per width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prep", help="state_tomo: ';'-separated gate labels preparing the state from |0..0>")
    p.add_argument("--gate", help="process_tomo: ';'-separated gate labels forming the target process")
    p.add_argument("--out")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("gateset", help="write a noisy gate set model")
    p.add_argument("--qubits", required=True)
    p.add_argument("--noise", action="append", default=[], help="kind:param[,param]; repeatable")
    p.add_argument("--define", action="append", default=[],
                   help="NAME=LABELS defines an explicit gate from ';'-separated standard labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_gateset)

    p = sub.add_parser("simulate", help="simulate a design")
    p.add_argument("--design", required=True)
    p.add_argument("--gateset")
    p.add_argument("--noise", action="append", default=[], help="kind:param[,param]; repeatable")
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="record exact outcome probabilities")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="analyze counts against their design")
    common_protocol(p, required=False)
    p.add_argument("--design", required=True)
    p.add_argument("--counts", required=True)
    p.add_argument("--method", choices=("linear", "mle"), default="linear")
    p.add_argument("--max-iter", type=int, default=20000, help="MLE iteration cap (exit code 3 when reached)")
    p.add_argument("--weighted", action="store_true", help="rb: weight lengths by their standard errors")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("metrics", help="compare two models")
    p.add_argument("model_a")
    p.add_argument("model_b")
    p.add_argument("--which", help="comma-separated subset of " + ",".join(METRICS))
    p.add_argument("--labels", help="'|'-separated gate labels to compare (default: shared explicit gates)")
    p.add_argument("--restarts", type=int, default=16, help="diamond-bound search restarts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
