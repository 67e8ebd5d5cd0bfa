"""Precision trade-off bounds for joint phase / diffusion estimation.

Three families of bounds live here:

* the Lu-Wang relation between normalised information regrets, via the
  incompatibility coefficients ``c`` and ``c̃``;
* the Zhu-Hayashi ceiling on two-copy collective measurements;
* the pure-state-decomposition bound of Chen and Yuan, which for the
  two-copy diffused qubit reproduces the 1.5 ceiling.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ComplexBetaError, NonOrthonormalBasisError, OutOfRangeError, SingularQfimError
from .information import bell_ratios_analytic
from .linalg import commutator, mat_sqrt, trace_norm

ATTAINABLE_TWO_COPY = 1.5


@dataclass(frozen=True)
class LuWangCoeffs:
    c: float
    c_tilde: float


class RegretCheck(NamedTuple):
    satisfied: bool
    # (2 - c̃²) minus the left-hand side; negative when violated
    slack: float


@dataclass
class TradeoffRegion:
    delta: float
    c_tilde: float
    gamma_phi: np.ndarray
    boundary_lw: np.ndarray
    boundary_attainable: np.ndarray
    bell_phi: np.ndarray
    bell_curve: np.ndarray

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "c_tilde": self.c_tilde,
            "gamma_phi": self.gamma_phi.tolist(),
            "lw_gamma_delta": self.boundary_lw.tolist(),
            "attainable_gamma_delta": self.boundary_attainable.tolist(),
            "bell_phi": self.bell_phi.tolist(),
            "bell_curve": self.bell_curve.tolist(),
        }


@dataclass
class PureDecomposition:
    basis: np.ndarray
    weights: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return sum(w * np.outer(v, v.conj()) for w, v in zip(self.weights, self.vectors))


def lu_wang_coeffs(rho, L1, L2, qfim) -> LuWangCoeffs:
    """Incompatibility coefficients ``c`` (from Im Ω₁₂) and ``c̃`` (trace norm)."""
    qfim = np.asarray(qfim, dtype=float)
    q11, q22 = qfim[0, 0], qfim[1, 1]
    if q11 <= 0 or q22 <= 0:
        raise SingularQfimError(f"QFIM diagonal ({q11}, {q22}) must be positive")
    norm = np.sqrt(q11 * q22)
    omega12 = np.trace(L1 @ L2 @ rho)
    s = mat_sqrt(rho)
    c = abs(omega12.imag) / norm
    c_tilde = trace_norm(s @ commutator(L1, L2) @ s) / (2 * norm)
    return LuWangCoeffs(float(c), float(c_tilde))


def two_copy_c_tilde(delta: float) -> float:
    return float(np.sqrt(1 + np.exp(-2 * delta * delta)) / 2)


def _lw_lhs(g1, g2, c_tilde):
    return g1 + g2 - 2 * np.sqrt(1 - c_tilde**2) * np.sqrt((1 - g1) * (1 - g2))


def lu_wang_regret_check(ratios: Sequence[float], c_tilde: float) -> RegretCheck:
    """Test a pair of information ratios against the Lu-Wang relation.

    ``ratios = (γ_1, γ_2)`` with ``γ_j = F_jj / Q_jj``; the relation reads
    ``γ_1 + γ_2 - 2√(1-c̃²)√((1-γ_1)(1-γ_2)) <= 2 - c̃²``.
    """
    g1, g2 = (float(g) for g in ratios)
    for g in (g1, g2):
        if not 0.0 <= g <= 1.0:
            raise OutOfRangeError(f"information ratio {g} outside [0, 1]")
    c_tilde = min(max(float(c_tilde), 0.0), 1.0)
    slack = float((2 - c_tilde**2) - _lw_lhs(g1, g2, c_tilde))
    return RegretCheck(slack >= -1e-12, slack)


def lw_max_gamma(gamma_1: float, c_tilde: float, tol: float = 1e-10) -> float:
    """Largest ``γ_2`` in [0, 1] allowed by the Lu-Wang relation (bisection).

    The left-hand side is increasing in ``γ_2`` so the feasible set is an
    interval starting at 0.
    """
    rhs = 2 - c_tilde**2
    if _lw_lhs(gamma_1, 1.0, c_tilde) <= rhs:
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _lw_lhs(gamma_1, mid, c_tilde) <= rhs:
            lo = mid
        else:
            hi = mid
    return lo


def region_curve(delta: float, samples: int = 201, bell_samples: int = 181) -> TradeoffRegion:
    """Lu-Wang and attainable boundaries for two copies, plus the Bell curve."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if delta <= 0:
        raise ValueError("delta must be positive")
    ct = two_copy_c_tilde(delta)
    g = np.linspace(0.0, 1.0, samples)
    lw = np.array([lw_max_gamma(x, ct) for x in g])
    attain = np.clip(ATTAINABLE_TWO_COPY - g, 0.0, 1.0)
    phis = np.linspace(0.0, np.pi / 2, bell_samples)
    # endpoints have sin 2φ = 0 but the ratios stay finite for Δ > 0
    bell = np.array([bell_ratios_analytic((ph, delta)) for ph in phis])
    return TradeoffRegion(delta, ct, g, lw, attain, phis, bell)


def zhu_hayashi_bound(d: int) -> tuple[int, int]:
    """``(collective, separable)`` ceilings on ``Tr(Q⁻¹F₂)`` for two copies in dimension ``d``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    return 3 * d - 3, 2 * (d - 1)


def collective_merit_ceiling(d: int = 2) -> float:
    """Ceiling on ``Tr(Q₂⁻¹F₂)`` once the two-copy QFIM ``Q₂ = 2Q`` is used."""
    return zhu_hayashi_bound(d)[0] / 2


DEFAULT_CY_BASIS = np.eye(4, dtype=complex)[[1, 2, 0, 3]]


def pure_decomposition(rho, basis=None) -> PureDecomposition:
    """Ensemble ``ρ = Σ λ_q |φ_q⟩⟨φ_q|`` with ``|φ_q⟩ ∝ √ρ |u_q⟩``."""
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    U = np.asarray(DEFAULT_CY_BASIS if basis is None else basis, dtype=complex)
    if U.shape != (dim, dim):
        raise NonOrthonormalBasisError(f"basis must hold {dim} vectors of length {dim}")
    if np.max(np.abs(U.conj() @ U.T - np.eye(dim))) > 1e-10:
        raise NonOrthonormalBasisError("basis vectors are not orthonormal")
    s = mat_sqrt(rho)
    weights = np.real(np.einsum("qi,ij,qj->q", U.conj(), rho, U))
    vecs = np.zeros_like(U)
    for q, u in enumerate(U):
        if weights[q] > 1e-12:
            vecs[q] = s @ u / np.sqrt(weights[q])
    return PureDecomposition(U, weights, vecs)


def chen_yuan_rhs(rho2, L1, L2, w=(0.5, 0.5), basis=None) -> float:
    """Right-hand side ``Σ_q (λ_q/2)(α_q - √(α_q² - β_q²))`` of the Chen-Yuan relation.

    The SLDs are rescaled to unit QFIM diagonal (``L_j / √Q_jj``) so the
    result bounds ``Σ_j w_j (1 - F_jj/Q_jj)`` from below.
    """
    w1, w2 = (float(x) for x in w)
    if w1 < 0 or w2 < 0:
        raise ValueError("weights must be non-negative")
    rho2 = np.asarray(rho2, dtype=complex)
    q1 = np.real(np.trace(rho2 @ L1 @ L1))
    q2 = np.real(np.trace(rho2 @ L2 @ L2))
    if q1 <= 1e-12 or q2 <= 1e-12:
        raise SingularQfimError("SLDs carry no information")
    A, B = L1 / np.sqrt(q1), L2 / np.sqrt(q2)
    dec = pure_decomposition(rho2, basis)
    C = commutator(A, B)
    total = 0.0
    for lam, v in zip(dec.weights, dec.vectors):
        if lam <= 1e-12:
            continue
        var_a = np.real(v.conj() @ A @ A @ v) - np.real(v.conj() @ A @ v) ** 2
        var_b = np.real(v.conj() @ B @ B @ v) - np.real(v.conj() @ B @ v) ** 2
        alpha = w1 * var_a + w2 * var_b
        beta = 1j * np.sqrt(w1 * w2) * (v.conj() @ C @ v)
        if abs(beta.imag) > 1e-8:
            raise ComplexBetaError(f"beta has imaginary part {beta.imag:.3g}")
        # Robertson guarantees alpha >= |beta|; equality is hit exactly here
        disc = max(alpha * alpha - beta.real**2, 0.0)
        total += lam / 2 * (alpha - np.sqrt(disc))
    return float(total)


def chen_yuan_merit_bound(rhs: float, w=(0.5, 0.5)) -> float:
    """Implied ceiling on ``w_1 γ_1 + w_2 γ_2``, rescaled to equal weights.

    For ``w = (½, ½)`` this is the ceiling on ``γ_1 + γ_2 = Tr(Q⁻¹F)``.
    """
    w1, w2 = w
    return (w1 + w2 - rhs) * 2 / (w1 + w2)
