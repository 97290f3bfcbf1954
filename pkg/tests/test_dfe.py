import numpy as np
import pytest

from qcvv.dfe import StabilizerTarget, dfe_stabilizer
from qcvv.errors import ValidationError
from qcvv.metrics import state_fidelity
from qcvv.qmodel import DensityMatrix, apply_channel, depolarizing_channel, random_density
from qcvv.simcore import PauliSampler

from oracles import pauli


def test_zero_state_exact_is_one():
    t = StabilizerTarget.zero(1)
    assert dict(t.group) == {"I": 1, "Z": 1}
    est = dfe_stabilizer(t, PauliSampler(DensityMatrix.basis(0, 2), exact=True), 10, 0, seed=1)
    assert est.f_hat == 1.0 and est.stderr == 0.0


def test_depolarized_zero_state_within_three_stderr():
    rho = apply_channel(depolarizing_channel(0.2), DensityMatrix.basis(0, 2))
    assert np.real(rho.mat[0, 0]) == pytest.approx(0.9, abs=1e-12)
    est = dfe_stabilizer(StabilizerTarget.zero(1), PauliSampler(rho), 2, 10**4, seed=2, exhaustive=True)
    assert est.n_settings == 2
    assert est.stderr > 0
    assert abs(est.f_hat - 0.9) <= 3 * est.stderr


def test_bell_state_exact_is_one():
    t = StabilizerTarget.bell()
    assert dict(t.group) == {"II": 1, "XX": 1, "YY": -1, "ZZ": 1}
    est = dfe_stabilizer(t, PauliSampler(t.density(), exact=True), 20, 0, seed=3)
    assert est.f_hat == pytest.approx(1.0, abs=1e-12)


def test_characteristic_matches_matrix_expectations():
    for gens in (["+XX", "+ZZ"], ["+XZI", "+ZXZ", "+IZX"], ["-ZI", "+IX"]):
        t = StabilizerTarget.from_generators(gens)
        psi = t.density().mat
        assert np.trace(psi).real == pytest.approx(1, abs=1e-12)
        assert len(t.group) == 2**t.n_qubits
        for label, sign in t.group:
            assert np.real(np.trace(psi @ pauli(label))) == pytest.approx(sign, abs=1e-12)


@pytest.mark.parametrize(
    "gens",
    [
        [],
        ["+XX", "+ZI"],  # anticommute
        ["+ZZ", "+ZZ"],  # dependent
        ["+ZI", "-ZI"],  # generate -I
        ["+XX"],  # too few
        ["+X", "+ZZ"],  # width mismatch
        ["+QQ", "+ZZ"],
    ],
)
def test_invalid_generators(gens):
    with pytest.raises(ValidationError):
        StabilizerTarget.from_generators(gens)


def test_sampler_validation():
    t = StabilizerTarget.zero(1)
    with pytest.raises(ValidationError):
        dfe_stabilizer(t, PauliSampler(DensityMatrix.basis(0, 2)), 0, 10, seed=0)
    with pytest.raises(ValidationError):
        dfe_stabilizer(t, PauliSampler(DensityMatrix.basis(0, 2)), 3, 0, seed=0)
    with pytest.raises(ValidationError):
        dfe_stabilizer(t, lambda p, s, seed: float("nan"), 3, 10, seed=0)


def test_estimator_is_unbiased():
    rng = np.random.default_rng(4)
    t = StabilizerTarget.bell()
    rho = DensityMatrix(0.7 * t.density().mat + 0.3 * random_density(4, rng).mat)
    truth = state_fidelity(rho, t.density())
    sampler = PauliSampler(rho)
    ests = [dfe_stabilizer(t, sampler, 8, 200, seed=1000 + k) for k in range(200)]
    mean = np.mean([e.f_hat for e in ests])
    stderr = np.mean([e.stderr for e in ests])
    assert abs(mean - truth) <= 3 * stderr / np.sqrt(200)


def test_exhaustive_exact_matches_state_fidelity():
    rng = np.random.default_rng(5)
    for t in (StabilizerTarget.zero(1), StabilizerTarget.zero(2), StabilizerTarget.bell(), StabilizerTarget.zero(3)):
        for _ in range(10):
            rho = random_density(2**t.n_qubits, rng)
            est = dfe_stabilizer(t, PauliSampler(rho, exact=True), 1, 0, seed=0, exhaustive=True)
            assert est.f_hat == pytest.approx(state_fidelity(rho, t.density()), abs=1e-9)
            assert est.stderr == 0.0


def test_f_clamped_keeps_raw_value():
    t = StabilizerTarget.zero(1)
    # a sampler returning values beyond the physical range is reported raw
    est = dfe_stabilizer(t, lambda p, s, seed: 1.5 if p == "Z" else 1.0, 4, 1, seed=0, exhaustive=True)
    assert est.f_hat == 1.25 and est.f_clamped == 1.0
