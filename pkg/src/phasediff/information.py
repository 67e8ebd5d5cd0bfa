"""Classical and quantum Fisher information for two-parameter state families.

Derivatives of states and outcome probabilities are central finite
differences; closed forms for the diffused equatorial qubit are provided
alongside as reference values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .encoding import ParamPoint, QubitPrep, diffused_qubit, equatorial_state
from .errors import DegenerateOutcomeError, SingularQfimError
from .linalg import Povm, commutator, kron, solve_sld

DELTA_MIN = 1e-4
FD_STEP = 1e-5
PROB_FLOOR = 1e-12
DERIV_FLOOR = 1e-8


@dataclass(frozen=True)
class StateFamily:
    """Two-parameter family ``(x1, x2) -> ρ``.

    ``builder`` returns the single-copy state; ``copies=2`` evaluates the
    tensor square.
    """

    builder: Callable[[float, float], np.ndarray]
    copies: int = 1
    fd_step: float = FD_STEP
    # lower bound on the second parameter (the diffusion amplitude)
    min_x2: float | None = None

    def __post_init__(self):
        if self.copies not in (1, 2):
            raise ValueError("copies must be 1 or 2")

    def state(self, x1: float, x2: float) -> np.ndarray:
        rho = np.asarray(self.builder(x1, x2), dtype=complex)
        return kron(rho, rho) if self.copies == 2 else rho

    def derivatives(self, x1: float, x2: float):
        h = self.fd_step
        d1 = (self.state(x1 + h, x2) - self.state(x1 - h, x2)) / (2 * h)
        d2 = (self.state(x1, x2 + h) - self.state(x1, x2 - h)) / (2 * h)
        return d1, d2


def equatorial_family(copies: int = 1, fd_step: float = FD_STEP) -> StateFamily:
    return StateFamily(equatorial_state, copies, fd_step, DELTA_MIN)


def qubit_family(theta: float, copies: int = 1, fd_step: float = FD_STEP) -> StateFamily:
    prep = QubitPrep(theta)
    return StateFamily(
        lambda phi, delta: diffused_qubit(prep, ParamPoint(phi, delta)), copies, fd_step, DELTA_MIN
    )


@dataclass
class InfoMatrices:
    qfim: np.ndarray
    omega: np.ndarray
    uhlmann: np.ndarray
    fim: np.ndarray | None = None
    slds: tuple = field(default=(), repr=False)
    rho: np.ndarray | None = field(default=None, repr=False)
    truncated_support: bool = False


def _check_point(family: StateFamily, p):
    x1, x2 = (float(v) for v in p)
    if family.min_x2 is not None and x2 < family.min_x2:
        raise ValueError(f"information quantities need delta >= {family.min_x2}, got {x2}")
    return x1, x2


def outcome_probabilities(rho: np.ndarray, povm: Povm) -> np.ndarray:
    return np.array([np.real(np.trace(rho @ e)) for e in povm])


def classical_fim(family: StateFamily, povm: Povm, p) -> np.ndarray:
    """Fisher information of the outcome distribution of ``povm``.

    Outcomes with probability below 1e-12 contribute nothing provided their
    derivative also vanishes; otherwise :class:`DegenerateOutcomeError`.
    """
    x1, x2 = _check_point(family, p)
    h = family.fd_step
    prob = outcome_probabilities(family.state(x1, x2), povm)
    d1 = (outcome_probabilities(family.state(x1 + h, x2), povm)
          - outcome_probabilities(family.state(x1 - h, x2), povm)) / (2 * h)
    d2 = (outcome_probabilities(family.state(x1, x2 + h), povm)
          - outcome_probabilities(family.state(x1, x2 - h), povm)) / (2 * h)
    return fim_from_probabilities(prob, np.stack([d1, d2]))


def fim_from_probabilities(prob: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """``F_ij = Σ_k ∂_i p_k ∂_j p_k / p_k`` with the small-probability rule."""
    small = prob < PROB_FLOOR
    if np.any(np.abs(grads[:, small]) > DERIV_FLOOR):
        k = int(np.flatnonzero(small & np.any(np.abs(grads) > DERIV_FLOOR, axis=0))[0])
        raise DegenerateOutcomeError(
            f"outcome {k} has probability {prob[k]:.3g} but derivative "
            f"{grads[:, k]} (unbounded information)"
        )
    g = grads[:, ~small]
    return (g / prob[~small]) @ g.T


def qfim(family: StateFamily, p, povm: Povm | None = None) -> InfoMatrices:
    """QFIM, Ω matrix and mean Uhlmann curvature from numerically solved SLDs."""
    x1, x2 = _check_point(family, p)
    rho = family.state(x1, x2)
    d1, d2 = family.derivatives(x1, x2)
    L1, t1 = solve_sld(rho, d1, full_output=True)
    L2, t2 = solve_sld(rho, d2, full_output=True)
    Ls = (L1, L2)
    omega = np.array([[np.trace(Lj @ Lk @ rho) for Lk in Ls] for Lj in Ls])
    uhl = np.array([[np.real(1j * np.trace(rho @ commutator(Lj, Lk)) / 4) for Lk in Ls] for Lj in Ls])
    info = InfoMatrices(
        qfim=np.real(omega + omega.T) / 2,
        omega=omega,
        uhlmann=uhl,
        slds=Ls,
        rho=rho,
        truncated_support=t1 or t2,
    )
    if povm is not None:
        info.fim = classical_fim(family, povm, (x1, x2))
    return info


def weak_commutativity(info: InfoMatrices) -> float:
    """Largest |𝒰_jk|; zero means the QCRB is asymptotically attainable."""
    return float(np.max(np.abs(info.uhlmann)))


def figure_of_merit(fim: np.ndarray, qfim_: np.ndarray) -> float:
    """``Tr(Q⁻¹ F)``."""
    fim = np.asarray(fim, dtype=float)
    qfim_ = np.asarray(qfim_, dtype=float)
    if np.any(np.diag(qfim_) <= 1e-12):
        raise SingularQfimError(f"QFIM diagonal {np.diag(qfim_)} is not positive")
    return float(np.trace(np.linalg.solve(qfim_, fim)))


def qfim_analytic(p, copies: int = 1) -> np.ndarray:
    """Closed-form QFIM of the diffused equatorial qubit (times ``copies``)."""
    _, delta = p
    d2 = delta * delta
    qdd = 2.0 if d2 == 0 else 4 * d2 / np.expm1(2 * d2)
    return copies * np.diag([np.exp(-2 * d2), qdd])


def sld_analytic(p) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form SLDs for ``φ`` and ``Δ`` of the diffused equatorial qubit."""
    phi, delta = p
    e = np.exp
    d2 = delta * delta
    Lp = np.array([[0, -1j * e(-d2 - 1j * phi)], [1j * e(-d2 + 1j * phi), 0]])
    Ld = (2 * delta / np.expm1(2 * d2)) * np.array(
        [[1, -e(d2 - 1j * phi)], [-e(d2 + 1j * phi), 1]]
    )
    return Lp, Ld


def bell_fim_analytic(p) -> np.ndarray:
    """Closed-form Fisher matrix of the Bell measurement on two copies."""
    phi, delta = p
    d2 = delta * delta
    E4 = np.exp(4 * d2)
    c4 = np.cos(4 * phi)
    den = 1 - 2 * E4 + c4
    fpp = -4 * np.sin(2 * phi) ** 2 / den
    fpd = -4 * delta * np.sin(4 * phi) / den
    cc = np.cos(2 * phi) ** 2
    fdd = 4 * d2 * (-4 * cc + E4 * (3 + c4)) / ((E4 - 1) * (E4 - cc))
    return np.array([[fpp, fpd], [fpd, fdd]])


def bell_merit_analytic(p) -> float:
    """Closed-form ``Tr(Q₂⁻¹F₂)`` of the Bell measurement. Requires ``Δ > 0``."""
    phi, delta = p
    if delta <= 0:
        raise ValueError("delta must be positive")
    e2 = np.exp(2 * delta * delta)
    c4 = np.cos(4 * phi)
    return float(1 / (1 + e2) + (1 - 2 * e2 + c4) / (1 - 2 * e2 * e2 + c4))


def bell_ratios_analytic(p) -> tuple[float, float]:
    """Per-parameter ratios ``(F_φφ/Q_φφ, F_ΔΔ/Q_ΔΔ)`` for the Bell measurement.

    With ``r = e^{-2Δ²}`` and ``c = cos² 2φ``::

        γ_φ = r sin²2φ / (1 - r²c)
        γ_Δ = r/(1 + r) + r(1 - r)c / (1 - r²c)

    Their sum is :func:`bell_merit_analytic`. The closed-form sum splits as
    ``r/(1+r)`` plus a φ-dependent remainder, but that split coincides with
    the per-parameter ratios only where ``cos 2φ = 0``.
    """
    phi, delta = p
    r = np.exp(-2 * delta * delta)
    c = np.cos(2 * phi) ** 2
    den = 1 - r * r * c
    return float(r * np.sin(2 * phi) ** 2 / den), float(r / (1 + r) + r * (1 - r) * c / den)
