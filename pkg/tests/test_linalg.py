import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasediff.encoding import equatorial_state
from phasediff.errors import IndefiniteMatrixError, InvalidPovmError, InvalidStateError, NonHermitianError
from phasediff.linalg import (
    SIGMA_Z,
    Povm,
    check_density_matrix,
    dagger,
    kron,
    kron_all,
    mat_sqrt,
    orthonormalize,
    random_density_matrix,
    random_unitary,
    solve_sld,
    trace_norm,
)

seeds = st.integers(0, 2**32 - 1)


def test_kron_examples():
    assert np.allclose(kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(kron(SIGMA_Z, np.eye(2)), np.diag([1, 1, -1, -1]))
    eq = np.full((2, 2), 0.5)
    assert np.allclose(kron(eq, eq), np.full((4, 4), 0.25))


@given(seeds)
def test_kron_associative_and_trace(seed):
    g = np.random.default_rng(seed)
    a, b, c = (g.normal(size=(2, 2)) + 1j * g.normal(size=(2, 2)) for _ in range(3))
    assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12)
    assert np.allclose(kron_all([a, b, c]), kron(a, kron(b, c)), atol=1e-12)
    assert abs(np.trace(kron(a, b)) - np.trace(a) * np.trace(b)) < 1e-12


def test_mat_sqrt_examples():
    assert np.allclose(mat_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(mat_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    rho = equatorial_state(0.0, 1.0)
    s = mat_sqrt(rho)
    assert np.max(np.abs(s @ s - rho)) < 1e-10


@given(seeds, st.integers(1, 4), st.integers(2, 6))
def test_mat_sqrt_round_trip(seed, rank, dim):
    rank = min(rank, dim)
    m = random_density_matrix(dim, np.random.default_rng(seed), rank) * 3.0
    s = mat_sqrt(m)
    assert np.max(np.abs(s - dagger(s))) < 1e-12
    assert np.linalg.eigvalsh(s).min() > -1e-12
    assert np.max(np.abs(s @ s - m)) < 1e-10


def test_mat_sqrt_errors():
    with pytest.raises(NonHermitianError):
        mat_sqrt(np.array([[1, 1e-6], [0, 1]]))
    with pytest.raises(IndefiniteMatrixError):
        mat_sqrt(np.diag([1.0, -1e-6]))
    # tiny negative eigenvalues are clamped
    assert np.allclose(mat_sqrt(np.diag([1.0, -1e-9])), np.diag([1.0, 0.0]))


def test_trace_norm_examples():
    assert trace_norm(np.eye(2)) == pytest.approx(2.0)
    assert trace_norm(np.diag([3.0, -4.0])) == pytest.approx(7.0)


@given(seeds)
def test_trace_norm_unitary_invariance(seed):
    g = np.random.default_rng(seed)
    m = g.normal(size=(4, 4)) + 1j * g.normal(size=(4, 4))
    u, v = random_unitary(4, g), random_unitary(4, g)
    assert abs(trace_norm(u @ m @ v) - trace_norm(m)) < 1e-10
    # oracle: Tr sqrt(m† m)
    assert abs(trace_norm(m) - np.trace(mat_sqrt(dagger(m) @ m)).real) < 1e-9


def test_solve_sld_zero_derivative():
    rho = equatorial_state(0.3, 0.4)
    assert np.allclose(solve_sld(rho, np.zeros((2, 2))), 0)


@given(seeds, st.integers(2, 5))
def test_solve_sld_residual_and_unbiased(seed, dim):
    g = np.random.default_rng(seed)
    rho = random_density_matrix(dim, g)
    d = g.normal(size=(dim, dim)) + 1j * g.normal(size=(dim, dim))
    d = d + dagger(d)
    d -= np.trace(d) / dim * np.eye(dim)
    L = solve_sld(rho, d)
    assert np.max(np.abs(L - dagger(L))) < 1e-12
    assert np.max(np.abs((rho @ L + L @ rho) / 2 - d)) < 1e-9
    assert abs(np.trace(rho @ L)) < 1e-9


def test_solve_sld_support_flag():
    rho = np.diag([1.0, 0.0]).astype(complex)
    # derivative living only outside the support is dropped and flagged
    L, flag = solve_sld(rho, np.diag([0.0, 1.0]), full_output=True)
    assert flag and np.allclose(L, 0)
    # derivative inside the support is solved, no flag
    d = np.array([[0, 1], [1, 0]], dtype=complex)
    L, flag = solve_sld(rho, d, full_output=True)
    assert not flag
    assert np.allclose((rho @ L + L @ rho) / 2, d)


def test_density_matrix_validation():
    check_density_matrix(np.eye(2) / 2)
    with pytest.raises(InvalidStateError):
        check_density_matrix(np.eye(2))
    with pytest.raises(InvalidStateError):
        check_density_matrix(np.diag([1.5, -0.5]))
    with pytest.raises(InvalidStateError):
        check_density_matrix(np.array([[0.5, 0.1], [0.2, 0.5]]))


def test_povm_validation():
    Povm((np.eye(2) / 2, np.eye(2) / 2))
    with pytest.raises(InvalidPovmError):
        Povm((np.eye(2) / 2,))
    with pytest.raises(InvalidPovmError):
        Povm((np.diag([1.2, 0.5]), np.diag([-0.2, 0.5])))
    with pytest.raises(InvalidPovmError):
        Povm((np.eye(2), np.eye(3) * 0))
    p = Povm.computational(3)
    assert len(p) == 3 and p.dim == 3
    assert np.allclose(p.permuted([2, 1, 0])[0], np.diag([0, 0, 1]))


@given(seeds)
def test_orthonormalize(seed):
    g = np.random.default_rng(seed)
    x = g.normal(size=(6, 4)) + 1j * g.normal(size=(6, 4))
    q = orthonormalize(x)
    assert np.max(np.abs(dagger(q) @ q - np.eye(4))) < 1e-12
    # the span is unchanged
    proj = q @ dagger(q)
    assert np.allclose(proj @ x, x)
