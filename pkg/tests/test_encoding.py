import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasediff.encoding import (
    EQUATORIAL,
    ParamPoint,
    PhaseSampleSet,
    QubitPrep,
    calibration_probs,
    diffused_fock,
    diffused_qubit,
    equatorial_state,
    finite_sample_state,
    phase_shift,
    sample_phases,
    two_copy,
)
from phasediff.linalg import is_density_matrix, random_density_matrix
from phasediff.measurement import bell_povm

angles = st.floats(-10, 10, allow_nan=False)
deltas = st.floats(0, 3, allow_nan=False)
thetas = st.floats(0, np.pi, allow_nan=False)


def gaussian_mixture_oracle(prep, phi, delta, order=80):
    """∫ U_x ρ₀ U_x† N(x; φ, 2Δ²) dx by Gauss-Hermite quadrature."""
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / w.sum()
    rho0 = prep.density()
    out = np.zeros((2, 2), dtype=complex)
    for xi, wi in zip(x, w):
        u = phase_shift(phi + np.sqrt(2) * delta * xi)
        out += wi * u @ rho0 @ u.conj().T
    return out


@given(thetas, angles, st.floats(0, 1.5))
def test_diffused_qubit_matches_channel_integral(theta, phi, delta):
    prep = QubitPrep(theta)
    assert np.allclose(diffused_qubit(prep, ParamPoint(phi, delta)),
                       gaussian_mixture_oracle(prep, phi, delta), atol=1e-12)


def test_diffused_qubit_examples():
    assert np.allclose(equatorial_state(0, 0), np.full((2, 2), 0.5))
    assert np.allclose(equatorial_state(1.3, 40.0), np.eye(2) / 2)
    rho = equatorial_state(np.pi / 4, 0.1)
    assert abs(rho[0, 1]) == pytest.approx(0.5 * np.exp(-0.01), abs=1e-15)
    # sign convention: e^{-iφ} on the (0, 1) entry
    assert np.angle(rho[0, 1]) == pytest.approx(-np.pi / 4)


@given(thetas, angles, deltas)
def test_diffused_qubit_valid_state(theta, phi, delta):
    assert is_density_matrix(diffused_qubit(QubitPrep(theta), ParamPoint(phi, delta)))


def test_qubit_prep_range():
    with pytest.raises(ValueError):
        QubitPrep(-0.1)
    with pytest.raises(ValueError):
        QubitPrep(3.2)


def test_param_point():
    with pytest.raises(ValueError):
        ParamPoint(0.1, -0.2).checked()
    assert ParamPoint(np.pi - 0.3, 0.2).reduced().phi == pytest.approx(0.3)
    assert ParamPoint(0.3 + np.pi, 0.2).reduced().phi == pytest.approx(0.3)


def test_fock_examples(rng):
    rho0 = random_density_matrix(4, rng)
    assert np.allclose(diffused_fock(rho0, ParamPoint(0, 0)), rho0)
    diag = np.diag([0.1, 0.2, 0.3, 0.4]).astype(complex)
    assert np.allclose(diffused_fock(diag, ParamPoint(1.2, 0.7)), diag)


@given(thetas, angles, deltas)
def test_fock_two_level_matches_qubit(theta, phi, delta):
    # Fock |0>,|1> with phase e^{iφ(n-m)} puts e^{-iφ} on entry (0, 1)
    prep = QubitPrep(theta)
    assert np.allclose(diffused_fock(prep.density(), ParamPoint(phi, delta)),
                       diffused_qubit(prep, ParamPoint(phi, delta)), atol=1e-14)


@given(st.integers(0, 2**32 - 1), angles, st.floats(0, 1), angles, st.floats(0, 1))
def test_fock_semigroup(seed, p1, d1, p2, d2):
    rho0 = random_density_matrix(5, np.random.default_rng(seed))
    once = diffused_fock(diffused_fock(rho0, ParamPoint(p1, d1)), ParamPoint(p2, d2))
    both = diffused_fock(rho0, ParamPoint(p1 + p2, np.hypot(d1, d2)))
    assert np.max(np.abs(once - both)) < 1e-12


@given(st.integers(0, 2**32 - 1), angles, deltas)
def test_fock_preserves_diagonal(seed, phi, delta):
    rho0 = random_density_matrix(4, np.random.default_rng(seed))
    out = diffused_fock(rho0, ParamPoint(phi, delta))
    assert np.array_equal(np.diag(out), np.diag(rho0))


def test_two_copy_entries():
    assert np.allclose(two_copy(np.eye(2) / 2), np.eye(4) / 4)
    phi, delta = 0.37, 0.52
    rho2 = two_copy(equatorial_state(phi, delta))
    assert rho2[0, 3] == pytest.approx(0.25 * np.exp(-2 * delta**2 - 2j * phi))
    assert rho2[1, 2] == pytest.approx(0.25 * np.exp(-2 * delta**2))


def test_sample_phases_determinism_and_degenerate():
    p = ParamPoint(0.4, 0.2)
    a, b = sample_phases(p, 1, seed=9), sample_phases(p, 1, seed=9)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, sample_phases(p, 1, seed=10).samples)
    z = sample_phases(ParamPoint(0.7, 0.0), 50, seed=1)
    assert np.all(z.samples == 0.7)
    with pytest.raises(ValueError):
        sample_phases(p, 0)
    with pytest.raises(ValueError):
        PhaseSampleSet(np.array([]), 0)


def test_sample_phases_moments():
    s = sample_phases(ParamPoint(1.0, 0.3), 10**6, seed=5).samples
    sigma = 0.3 * np.sqrt(2)
    assert abs(s.mean() - 1.0) < 3 * sigma / 1e3
    assert abs(s.std() - sigma) < 5 * sigma / np.sqrt(2e6)


def test_quantile_scheme():
    s = sample_phases(ParamPoint(0.5, 0.2), 200, scheme="quantile").samples
    assert len(s) == 200 and abs(s.mean() - 0.5) < 1e-12
    assert np.array_equal(s, sample_phases(ParamPoint(0.5, 0.2), 200, seed=99, scheme="quantile").samples)
    with pytest.raises(ValueError):
        sample_phases(ParamPoint(0.5, 0.2), 10, scheme="sobol")


def test_finite_sample_state_examples():
    one = finite_sample_state(EQUATORIAL, PhaseSampleSet(np.array([0.8]), None))
    assert np.allclose(one, equatorial_state(0.8, 0.0))
    a = 0.3
    two = finite_sample_state(EQUATORIAL, PhaseSampleSet(np.array([1.1 - a, 1.1 + a]), None))
    assert abs(two[0, 1]) == pytest.approx(0.5 * np.cos(a))
    # brute-force mixture of U ρ U†
    ph = sample_phases(ParamPoint(0.2, 0.4), 30, seed=3)
    brute = np.mean([phase_shift(x) @ EQUATORIAL.density() @ phase_shift(x).conj().T
                     for x in ph.samples], axis=0)
    assert np.allclose(finite_sample_state(EQUATORIAL, ph), brute, atol=1e-15)


def test_finite_sample_converges():
    p = ParamPoint(np.pi / 4, 0.1)
    m = 10**5
    ph = sample_phases(p, m, seed=11)
    diff = np.max(np.abs(finite_sample_state(EQUATORIAL, ph) - equatorial_state(*p)))
    # standard error of a mean of e^{-iφ} terms is at most 0.5/√M per entry
    assert diff < 3 * 0.5 / np.sqrt(m)


def test_calibration_examples():
    assert np.allclose(calibration_probs(0, 0), (0.5, 0, 0.5, 0))
    assert np.allclose(calibration_probs(np.pi / 2, np.pi / 2), (0, 0.5, 0.5, 0), atol=1e-15)


@given(angles, angles)
def test_calibration_matches_bell_projection(p1, p2):
    rho = np.kron(equatorial_state(p1, 0), equatorial_state(p2, 0))
    brute = bell_povm().probabilities(rho)
    got = calibration_probs(p1, p2)
    assert sum(got) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(np.array(got) - brute)) < 1e-12
