"""Small dense complex linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Every use case in
this package has dimension at most 16, so nothing here tries to be clever
about sparsity or batching.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    IndefiniteMatrixError,
    InvalidPovmError,
    InvalidStateError,
    NonHermitianError,
)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
# eigenvalues in [-CLAMP_TOL, 0) are treated as rounding noise and clamped
CLAMP_TOL = 1e-8
SLD_SUPPORT_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - dagger(m)), initial=0.0) <= tol


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Tensor product ``a ⊗ b``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = kron(out, m)
    return out


def _psd_eigh(m: np.ndarray, nonherm_tol: float, neg_tol: float):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - dagger(m)), initial=0.0)
    if dev > nonherm_tol:
        raise NonHermitianError(f"matrix is not Hermitian (max deviation {dev:.3g})")
    w, v = np.linalg.eigh(hermitian_part(m))
    if w.size and w.min() < -neg_tol:
        raise IndefiniteMatrixError(f"matrix has eigenvalue {w.min():.3g} < -{neg_tol:g}")
    return np.clip(w, 0.0, None), v


def mat_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian positive semidefinite matrix.

    Eigenvalues in ``[-1e-8, 0)`` are clamped to zero. Raises
    :class:`NonHermitianError` if ``m`` deviates from ``m†`` by more than 1e-9
    and :class:`IndefiniteMatrixError` for eigenvalues below ``-1e-8``.
    """
    w, v = _psd_eigh(m, 1e-9, CLAMP_TOL)
    s = (v * np.sqrt(w)) @ dagger(v)
    return hermitian_part(s)


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values, ``Tr sqrt(m† m)``."""
    return float(np.sum(np.linalg.svd(np.asarray(m, dtype=complex), compute_uv=False)))


def solve_sld(rho: np.ndarray, drho: np.ndarray, full_output: bool = False):
    """Symmetric logarithmic derivative ``L`` with ``(ρL + Lρ)/2 = ∂ρ``.

    Solved in the eigenbasis of ``rho``: ``L_ab = 2 (∂ρ)_ab / (λ_a + λ_b)``.
    Components with ``λ_a + λ_b < 1e-12`` lie outside the support of ``rho``
    and are set to zero.

    Parameters
    ----------
    rho : (d, d) array
        Density matrix.
    drho : (d, d) array
        Hermitian derivative of ``rho``.
    full_output : bool
        If true, also return a flag telling whether a non-zero component of
        ``drho`` was discarded by the support convention.
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    w, v = np.linalg.eigh(hermitian_part(rho))
    d = dagger(v) @ drho @ v
    denom = w[:, None] + w[None, :]
    keep = denom >= SLD_SUPPORT_TOL
    lab = np.zeros_like(d)
    lab[keep] = 2.0 * d[keep] / denom[keep]
    L = hermitian_part(v @ lab @ dagger(v))
    if full_output:
        truncated = bool(np.any(np.abs(d[~keep]) > SLD_SUPPORT_TOL))
        return L, truncated
    return L


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Validate and return ``rho`` as a complex array.

    Hermitian to 1e-12, unit trace to 1e-12, eigenvalues >= -1e-10.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidStateError(f"density matrix must be square, got shape {rho.shape}")
    if not is_hermitian(rho, HERMITIAN_TOL):
        raise InvalidStateError("density matrix is not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > HERMITIAN_TOL:
        raise InvalidStateError(f"density matrix has trace {tr:.15g}")
    wmin = np.linalg.eigvalsh(hermitian_part(rho)).min()
    if wmin < -PSD_TOL:
        raise InvalidStateError(f"density matrix has negative eigenvalue {wmin:.3g}")
    return rho


def is_density_matrix(rho: np.ndarray) -> bool:
    try:
        check_density_matrix(rho)
    except InvalidStateError:
        return False
    return True


@dataclass(frozen=True)
class Povm:
    """A finite set of positive operators summing to the identity."""

    elements: tuple
    tol: float = 1e-10

    def __post_init__(self):
        els = tuple(np.asarray(e, dtype=complex) for e in self.elements)
        if not els:
            raise InvalidPovmError("a POVM needs at least one element")
        dim = els[0].shape[0]
        for k, e in enumerate(els):
            if e.shape != (dim, dim):
                raise InvalidPovmError(f"element {k} has shape {e.shape}, expected {(dim, dim)}")
            if not is_hermitian(e, max(self.tol, HERMITIAN_TOL)):
                raise InvalidPovmError(f"element {k} is not Hermitian")
            wmin = np.linalg.eigvalsh(hermitian_part(e)).min()
            if wmin < -max(self.tol, PSD_TOL):
                raise InvalidPovmError(f"element {k} has negative eigenvalue {wmin:.3g}")
        dev = np.max(np.abs(sum(els) - np.eye(dim)))
        if dev > self.tol:
            raise InvalidPovmError(f"elements do not sum to the identity (max deviation {dev:.3g})")
        object.__setattr__(self, "elements", els)

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, k):
        return self.elements[k]

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.array([np.real(np.trace(rho @ e)) for e in self.elements])

    def permuted(self, order: Sequence[int]) -> "Povm":
        return Povm(tuple(self.elements[i] for i in order), self.tol)

    @classmethod
    def from_vectors(cls, vectors: Iterable[np.ndarray], tol: float = 1e-10) -> "Povm":
        """Rank-one POVM ``{|v⟩⟨v|}`` from (unnormalised) vectors."""
        return cls(tuple(np.outer(v, np.conj(v)) for v in vectors), tol)

    @classmethod
    def computational(cls, dim: int) -> "Povm":
        return cls.from_vectors(np.eye(dim, dtype=complex))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_isometry(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random ``rows × cols`` matrix with orthonormal columns."""
    z = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)
    return orthonormalize(z)


def orthonormalize(x: np.ndarray) -> np.ndarray:
    """Q factor of a thin QR decomposition with a positive-diagonal R."""
    q, r = np.linalg.qr(x)
    d = np.diag(r)
    ph = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return q * ph


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho)
