"""Acceptance criteria, one test each; a PASS/FAIL line per criterion is printed in the summary."""

import time

import numpy as np
import pytest
from scipy.stats import chisquare

from qcvv.cli import main
from qcvv.clifford import clifford_group
from qcvv.dfe import StabilizerTarget, dfe_stabilizer
from qcvv.holistic import run_quantum_volume
from qcvv.metrics import (
    avg_gate_fidelity,
    diamond_distance_bounds,
    process_fidelity,
    state_fidelity,
    trace_distance,
)
from qcvv.qmodel import (
    Z,
    DensityMatrix,
    GateSet,
    Povm,
    depolarizing_channel,
    identity_channel,
    random_channel,
    random_density,
    random_pure_state,
    pure_density,
    unitary_channel,
)
from qcvv.rb import RbDesign, fit_decay, run_rb, sample_rb_sequences
from qcvv.simcore import CountData, NoiseSpec, PauliSampler, noisy_gateset, run_design
from qcvv.tomo import (
    linear_inversion_process,
    linear_inversion_state,
    mle_state,
    project_density,
    standard_process_design,
    standard_state_design,
    state_loglikelihood,
)

from oracles import (
    bloch_grid,
    choi_by_definition,
    depolarizing_kraus,
    pauli_basis_loglik,
    pauli_basis_loglik_grid,
    superop_by_action,
)

RB_LENGTHS = (1, 2, 4, 8, 16, 32)


def _exact_rows(design, rho):
    p = np.real(design.design_matrix @ rho.reshape(-1, order="F"))
    k = design.outcomes_per_setting
    return [
        CountData(c.circuit_id, 0, probs=tuple(np.clip(p[i * k:(i + 1) * k], 0, None)))
        for i, c in enumerate(design.meas_fiducials)
    ]


@pytest.mark.criterion("RB twirling oracle: p = 0.98 +- 1e-6, r = 0.0100 +- 1e-6, under 1 min")
def test_rb_twirling_oracle():
    start = time.perf_counter()
    gs = noisy_gateset(1, [NoiseSpec.parse("depolarizing:0.02")])
    fit = fit_decay(run_rb(RbDesign(1, RB_LENGTHS, 30, seed=2024), gs, 0, 0, exact=True))
    elapsed = time.perf_counter() - start
    print(f"p={fit.p!r} r={fit.r!r} elapsed={elapsed:.2f}s")
    assert abs(fit.p - 0.98) <= 1e-6
    assert abs(fit.r - 0.01) <= 1e-6
    assert elapsed < 60


@pytest.mark.criterion("RB SPAM invariance: p within 1e-6 of 0.98, SPAM confined to A and B (B = 1/2 analytically)")
def test_rb_spam_invariance():
    design = RbDesign(1, RB_LENGTHS, 30, seed=2024)
    clean = noisy_gateset(1, [NoiseSpec.parse("depolarizing:0.02")])
    spam = noisy_gateset(1, [NoiseSpec.parse("depolarizing:0.02"), NoiseSpec.parse("spam:0.02,0.05")])
    f0 = fit_decay(run_rb(design, clean, 0, 0, exact=True))
    f1 = fit_decay(run_rb(design, spam, 0, 0, exact=True))
    print(f"clean A={f0.A!r} B={f0.B!r}; spam A={f1.A!r} B={f1.B!r} p={f1.p!r}")
    assert abs(f1.p - 0.98) <= 1e-6
    # SPAM enters only through A and B: A = (1 - 2 e_prep)(1 - 2 e_read) A_clean, while B is the
    # readout of I/2, which a symmetric flip leaves at exactly 1/2
    assert f1.A == pytest.approx((1 - 2 * 0.02) * (1 - 2 * 0.05) * f0.A, abs=1e-6)
    assert abs(f1.A - f0.A) > 1e-3
    assert f1.B == pytest.approx(0.5, abs=1e-6) and f0.B == pytest.approx(0.5, abs=1e-6)


@pytest.mark.criterion("Tomography exactness: 200 states (d=2,4) and 50 channels (d=2) within 1e-9")
def test_tomography_exactness():
    rng = np.random.default_rng(6)
    worst = 0.0
    for n in (1, 2):
        design = standard_state_design(n)
        for _ in range(200):
            rho = random_density(2**n, rng).mat
            est = linear_inversion_state(design, _exact_rows(design, rho))
            worst = max(worst, np.max(np.abs(est.rho_hat - rho)))
    design = standard_process_design(1, target=("G",))
    for _ in range(50):
        G = random_channel(2, rng)
        gs = GateSet(DensityMatrix.basis(0, 2), Povm.computational(2), gates={"G": G})
        est = linear_inversion_process(design, run_design(gs, design.circuits(), 0, 0, exact=True))
        worst = max(worst, np.max(np.abs(est.superop_hat - superop_by_action(G.kraus))))
    print(f"max abs entry error {worst:.3e}")
    assert worst < 1e-9


@pytest.mark.criterion("MLE positivity: 100 non-PSD datasets and Bloch-grid optimality, under 5 min")
def test_mle_positivity():
    start = time.perf_counter()
    design = standard_state_design(1)
    rng = np.random.default_rng(7)
    found = 0
    attempts = 0
    while found < 100:
        attempts += 1
        rho = pure_density(random_pure_state(2, rng))
        gs = GateSet(rho, Povm.computational(2))
        data = run_design(gs, design.circuits(), 20, seed=attempts)
        if linear_inversion_state(design, data).physical:
            continue
        found += 1
        est = mle_state(design, data)
        assert est.min_eigenvalue >= -1e-9
        li = linear_inversion_state(design, data)
        assert est.loglikelihood >= state_loglikelihood(design, data, project_density(li.rho_hat)) - 1e-12
    counts = ((80, 20), (50, 50), (100, 0))
    data = [CountData(c.circuit_id, 100, {0: a, 1: b}) for c, (a, b) in zip(design.meas_fiducials, counts)]
    est = mle_state(design, data)
    ll = pauli_basis_loglik(counts, DensityMatrix(est.rho_hat, atol=1e-9).bloch())
    grid_best = float(np.max(pauli_basis_loglik_grid(counts, bloch_grid(0.01))))
    elapsed = time.perf_counter() - start
    print(f"{found} non-PSD datasets in {attempts} draws; MLE logL={ll!r} grid max={grid_best!r}; {elapsed:.1f}s")
    assert ll >= grid_best - 1e-9
    assert elapsed < 300


@pytest.mark.criterion("Metric identities: F(rho,rho)=1, orthogonal trace distance 1, 0.95, 0.925, diamond [1,1]")
def test_metric_identities():
    rho = random_density(2, np.random.default_rng(8))
    assert state_fidelity(rho, rho) == pytest.approx(1, abs=1e-9)
    assert trace_distance(DensityMatrix.basis(0, 2), DensityMatrix.basis(1, 2)) == pytest.approx(1, abs=1e-12)
    assert avg_gate_fidelity(0.925, 2) == pytest.approx(0.95, abs=1e-12)
    psi = np.eye(2).reshape(-1) / np.sqrt(2)
    oracle = np.real(psi @ choi_by_definition(depolarizing_kraus(0.1)) @ psi)
    f = process_fidelity(depolarizing_channel(0.1), identity_channel(2))
    assert abs(f - 0.925) <= 1e-9 and abs(f - oracle) <= 1e-9
    b = diamond_distance_bounds(unitary_channel(Z), identity_channel(2))
    print(f"process fidelity {f!r}; diamond [{b.lower!r}, {b.upper!r}]")
    assert b.lower == pytest.approx(1, abs=1e-9) and b.upper == pytest.approx(1, abs=1e-12)


@pytest.mark.criterion("Quantum volume: noiseless qv = 16 (200 circuits, exact), depolarized fails n=2, under 10 min")
def test_quantum_volume():
    start = time.perf_counter()
    r = run_quantum_volume(GateSet.ideal, 4, 200, 0, seed=2024, exact=True)
    assert [lv.n for lv in r.levels] == [2, 3, 4]
    assert all(lv.passed for lv in r.levels) and r.qv == 16
    dep = run_quantum_volume(lambda n: noisy_gateset(n, [NoiseSpec.parse("depolarizing:1")]), 2, 200, 0, 2024,
                             exact=True)
    elapsed = time.perf_counter() - start
    print(f"noiseless HOPs {[round(lv.mean_hop, 4) for lv in r.levels]}; depolarized HOP "
          f"{dep.level(2).mean_hop!r}; {elapsed:.1f}s")
    assert not dep.level(2).passed and dep.level(2).mean_hop <= 0.5 + 1e-12
    assert elapsed < 600


@pytest.mark.criterion("DFE brute-force equivalence with state_fidelity within 1e-9, n <= 3")
def test_dfe_equivalence():
    rng = np.random.default_rng(9)
    worst = 0.0
    for t in (StabilizerTarget.zero(1), StabilizerTarget.zero(2), StabilizerTarget.zero(3), StabilizerTarget.bell()):
        for _ in range(50):
            rho = random_density(2**t.n_qubits, rng)
            est = dfe_stabilizer(t, PauliSampler(rho, exact=True), 1, 0, seed=0, exhaustive=True)
            worst = max(worst, abs(est.f_hat - state_fidelity(rho, t.density())))
    print(f"max deviation {worst:.3e}")
    assert worst <= 1e-9


@pytest.mark.criterion("Clifford machinery: orders 24 and 11520, RB circuits compose to identity, chi-square")
def test_clifford_machinery():
    g1, g2 = clifford_group(1), clifford_group(2)
    assert (g1.order, g2.order) == (24, 11520)
    for n, g in ((1, g1), (2, g2)):
        for c in sample_rb_sequences(RbDesign(n, (1, 2, 4, 8, 16), 20, seed=n)):
            assert g.lookup(g.compose_sequence([g.index_of_label(lbl) for lbl in c.layers])) == 0
    freq = np.bincount(g1.sample(np.random.default_rng(20240501), 100_000), minlength=24)
    pvalue = chisquare(freq).pvalue
    print(f"chi-square p-value {pvalue:.4f}")
    assert pvalue > 1e-3


@pytest.mark.criterion("Pipeline determinism: design, simulate, analyze twice gives byte-identical reports")
def test_pipeline_determinism(tmp_path):
    def pipeline(tag, protocol_args, analyze_args=()):
        d, c, r = (tmp_path / f"{tag}-{x}.json" for x in "dcr")
        assert main(["design", *protocol_args, "--seed", "3", "--out", str(d)]) == 0
        assert main(["simulate", "--design", str(d), "--noise", "depolarizing:0.02", "--noise", "spam:0.01,0.02",
                     "--shots", "200", "--seed", "4", "--out", str(c)]) == 0
        assert main(["analyze", "--design", str(d), "--counts", str(c), *analyze_args, "--out", str(r)]) == 0
        return r.read_bytes()

    cases = [
        (["--protocol", "rb", "--qubits", "1", "--lengths", "1,2,4,8", "--k", "10"], ()),
        (["--protocol", "state_tomo", "--qubits", "2", "--prep", "H:0;CNOT:0,1"], ("--method", "mle")),
        (["--protocol", "process_tomo", "--qubits", "1", "--gate", "X:0"], ("--method", "mle")),
        (["--protocol", "qv", "--qubits", "2,3", "--circuits", "20"], ()),
    ]
    for i, (proto, analyze) in enumerate(cases):
        assert pipeline(f"a{i}", proto, analyze) == pipeline(f"b{i}", proto, analyze)
