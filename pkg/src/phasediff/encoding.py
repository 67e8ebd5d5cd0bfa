"""Parameterised states under Gaussian phase diffusion.

Sign convention: a phase shift ``φ`` puts ``e^{-iφ}`` on the ``(0, 1)``
entry of a qubit density matrix, i.e. ``U_φ = diag(e^{-iφ/2}, e^{iφ/2})``.
The Fock-basis channel uses the matching factor ``e^{iφ(n-m)}`` on entry
``(n, m)``. Every module uses this one convention.
"""
from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import NamedTuple

import numpy as np

from .linalg import kron

DEFAULT_PHASE_SAMPLES = 200
RNG_NAME = "numpy.random.Philox"


class ParamPoint(NamedTuple):
    """Estimation target ``(phi, delta)`` in radians."""

    phi: float
    delta: float

    def checked(self) -> "ParamPoint":
        if not np.isfinite(self.phi) or not np.isfinite(self.delta):
            raise ValueError(f"non-finite parameter point {self}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        return self

    def reduced(self) -> "ParamPoint":
        """Map ``phi`` into ``[0, π/2]``, the cell the Bell statistics resolve.

        The Bell probabilities depend on ``phi`` only through ``cos 2φ``.
        """
        c = np.cos(2 * self.phi)
        return ParamPoint(0.5 * float(np.arccos(np.clip(c, -1.0, 1.0))), self.delta)


@dataclass(frozen=True)
class QubitPrep:
    """Initial pure state ``cos(θ/2)|0⟩ + sin(θ/2)|1⟩``."""

    theta: float = np.pi / 2

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"theta must lie in [0, π], got {self.theta}")

    def ket(self) -> np.ndarray:
        return np.array([np.cos(self.theta / 2), np.sin(self.theta / 2)], dtype=complex)

    def density(self) -> np.ndarray:
        k = self.ket()
        return np.outer(k, k.conj())


EQUATORIAL = QubitPrep(np.pi / 2)


@dataclass(frozen=True)
class PhaseSampleSet:
    samples: np.ndarray
    seed: int | None
    scheme: str = "iid"

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if s.size < 1:
            raise ValueError("a phase sample set needs at least one phase")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size


def make_rng(seed) -> np.random.Generator:
    """Generator on the counter-based Philox bit generator.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.
    """
    return np.random.Generator(np.random.Philox(seed))


def phase_shift(phi: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def diffused_qubit(prep: QubitPrep, p: ParamPoint) -> np.ndarray:
    """Closed-form qubit state after the Gaussian phase-diffusion channel."""
    phi, delta = p
    c, s = np.cos(prep.theta / 2), np.sin(prep.theta / 2)
    off = c * s * np.exp(-1j * phi - delta * delta)
    return np.array([[c * c, off], [np.conj(off), s * s]], dtype=complex)


def equatorial_state(phi: float, delta: float) -> np.ndarray:
    return diffused_qubit(EQUATORIAL, ParamPoint(phi, delta))


def diffused_fock(rho0: np.ndarray, p: ParamPoint) -> np.ndarray:
    """Phase diffusion of a state given in a truncated Fock basis.

    Entry ``(n, m)`` is multiplied by ``exp(-Δ²(n-m)² + iφ(n-m))``.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    n = np.arange(rho0.shape[0])
    k = n[:, None] - n[None, :]
    return rho0 * np.exp(-(p.delta**2) * k**2 + 1j * p.phi * k)


def two_copy(rho: np.ndarray) -> np.ndarray:
    return kron(rho, rho)


def two_copy_equatorial(phi: float, delta: float) -> np.ndarray:
    return two_copy(equatorial_state(phi, delta))


def sample_phases(p: ParamPoint, count: int = DEFAULT_PHASE_SAMPLES, seed=0,
                  scheme: str = "iid") -> PhaseSampleSet:
    """Discrete phases representing ``N(φ, 2Δ²)``.

    ``scheme="iid"`` draws ``count`` independent normals from a seeded Philox
    generator. ``scheme="quantile"`` places the phases on the mid-point
    quantiles of the same Gaussian and ignores the seed.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    sigma = np.sqrt(2.0) * p.delta
    if scheme == "iid":
        z = make_rng(seed).standard_normal(count)
    elif scheme == "quantile":
        nd = NormalDist()
        z = np.array([nd.inv_cdf((i + 0.5) / count) for i in range(count)])
    else:
        raise ValueError(f"unknown phase sampling scheme {scheme!r}")
    seed_meta = seed if isinstance(seed, (int, np.integer)) else None
    return PhaseSampleSet(p.phi + sigma * z, seed_meta, scheme)


def finite_sample_state(prep: QubitPrep, phases: PhaseSampleSet) -> np.ndarray:
    """Uniform mixture of ``U_φ ρ₀ U_φ†`` over the sampled phases."""
    rho0 = prep.density()
    # U ρ0 U† only rephases the coherence for a diagonal U
    coherence = np.mean(np.exp(-1j * phases.samples))
    out = rho0.copy()
    out[0, 1] = rho0[0, 1] * coherence
    out[1, 0] = np.conj(out[0, 1])
    return out


def calibration_probs(phi1: float, phi2: float) -> tuple[float, float, float, float]:
    """Bell-port probabilities for the product of two pure equatorial qubits."""
    sp = np.cos(phi1 + phi2)
    sm = np.cos(phi1 - phi2)
    return (0.25 * (1 + sp), 0.25 * (1 - sp), 0.25 * (1 + sm), 0.25 * (1 - sm))
