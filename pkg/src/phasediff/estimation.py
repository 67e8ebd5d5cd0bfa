"""Simulated Bell-measurement experiment with maximum-likelihood estimation.

Randomness flows from one root seed through :class:`numpy.random.SeedSequence`
spawning::

    root ─┬─ phase lists (copy 1, copy 2)      fixed-list finite-sample mode
          ├─ repetition r ─┬─ counts
          │                └─ phase lists      redraw finite-sample mode
          └─ Monte Carlo error bars

so every record is reproducible bit for bit from ``(setting, seed)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import xlogy

from .encoding import (
    DEFAULT_PHASE_SAMPLES,
    EQUATORIAL,
    ParamPoint,
    finite_sample_state,
    make_rng,
    sample_phases,
)
from .errors import EmptyCountsError, SingularCovarianceError
from .information import figure_of_merit, qfim_analytic
from .linalg import kron
from .measurement import bell_povm, bell_probs, bell_probs_many

DELTA_MAX = 3.0
GRID_SIZE = 128
_A_MIN = np.exp(-2 * DELTA_MAX**2)
# the likelihood is quadratic in Δ near Δ = 0, so the solver only resolves the edge to ~√fatol
_EDGE = 1e-6


@dataclass(frozen=True)
class EncodingMode:
    """How the two-copy state is prepared.

    ``kind="analytic"`` uses the exact Gaussian channel. ``kind="finite_sample"``
    mixes over ``samples`` discrete phases per copy, drawn i.i.d. (or on
    Gaussian quantiles with ``scheme="quantile"``). With ``redraw=False`` one
    pair of phase lists serves every repetition of an experiment; with
    ``redraw=True`` each repetition draws fresh lists.
    """

    kind: str = "analytic"
    samples: int = DEFAULT_PHASE_SAMPLES
    scheme: str = "iid"
    redraw: bool = False

    def __post_init__(self):
        if self.kind not in ("analytic", "finite_sample"):
            raise ValueError(f"unknown encoding mode {self.kind!r}")
        if self.kind == "finite_sample" and self.samples < 1:
            raise ValueError("finite-sample mode needs at least one phase sample")
        if self.scheme not in ("iid", "quantile"):
            raise ValueError(f"unknown phase sampling scheme {self.scheme!r}")


ANALYTIC = EncodingMode()


class CountVector(NamedTuple):
    n: tuple

    @property
    def nu(self) -> int:
        return int(sum(self.n))


@dataclass
class Estimate:
    phi_hat: float
    delta_hat: float
    loglik: float
    converged: bool


@dataclass
class ExperimentRecord:
    setting: ParamPoint
    nu_target: int
    repetitions: int
    estimates: list
    counts: np.ndarray
    covariance: np.ndarray
    fim_inferred: np.ndarray
    merit: float
    gamma_phi: float
    gamma_delta: float
    merit_error: float = float("nan")
    gamma_phi_error: float = float("nan")
    gamma_delta_error: float = float("nan")
    mode: EncodingMode = ANALYTIC
    seed: int | None = None
    mc_resamples: int = 0

    def to_dict(self, include_counts: bool = True) -> dict:
        d = {
            "setting": {"phi": float(self.setting.phi), "delta": float(self.setting.delta)},
            "nu_target": self.nu_target,
            "repetitions": self.repetitions,
            "mode": asdict(self.mode),
            "seed": self.seed,
            "covariance": self.covariance.tolist(),
            "fim_inferred": self.fim_inferred.tolist(),
            "merit": self.merit,
            "merit_error": self.merit_error,
            "gamma_phi": self.gamma_phi,
            "gamma_delta": self.gamma_delta,
            "gamma_phi_error": self.gamma_phi_error,
            "gamma_delta_error": self.gamma_delta_error,
            "mc_resamples": self.mc_resamples,
            "estimates": [asdict(e) for e in self.estimates],
        }
        if include_counts:
            d["counts"] = self.counts.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(
            setting=ParamPoint(d["setting"]["phi"], d["setting"]["delta"]),
            nu_target=d["nu_target"],
            repetitions=d["repetitions"],
            estimates=[Estimate(**e) for e in d["estimates"]],
            counts=np.asarray(d.get("counts", []), dtype=np.int64),
            covariance=np.asarray(d["covariance"]),
            fim_inferred=np.asarray(d["fim_inferred"]),
            merit=d["merit"],
            gamma_phi=d["gamma_phi"],
            gamma_delta=d["gamma_delta"],
            merit_error=d["merit_error"],
            gamma_phi_error=d["gamma_phi_error"],
            gamma_delta_error=d["gamma_delta_error"],
            mode=EncodingMode(**d["mode"]),
            seed=d["seed"],
            mc_resamples=d.get("mc_resamples", 0),
        )

    def csv_row(self) -> dict:
        c = self.covariance
        return {
            "phi": self.setting.phi,
            "delta": self.setting.delta,
            "nu": self.nu_target,
            "reps": self.repetitions,
            "merit": self.merit,
            "merit_error": self.merit_error,
            "gamma_phi": self.gamma_phi,
            "gamma_delta": self.gamma_delta,
            "cov_phi_phi": c[0, 0],
            "cov_phi_delta": c[0, 1],
            "cov_delta_delta": c[1, 1],
        }


CSV_FIELDS = (
    "phi", "delta", "nu", "reps", "merit", "merit_error", "gamma_phi", "gamma_delta",
    "cov_phi_phi", "cov_phi_delta", "cov_delta_delta",
)


def records_to_csv(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.csv_row().items()})
    return buf.getvalue()


def records_to_json(records: Sequence[ExperimentRecord], **kw) -> str:
    return json.dumps([r.to_dict(**kw) for r in records], indent=2)


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def finite_sample_bell_probs(p: ParamPoint, mode: EncodingMode, seed) -> np.ndarray:
    """Bell probabilities of ``ρ₁ ⊗ ρ₂`` built from two independent phase lists."""
    s1, s2 = _seed_sequence(seed).spawn(2)
    rhos = [
        finite_sample_state(EQUATORIAL, sample_phases(p, mode.samples, s, mode.scheme))
        for s in (s1, s2)
    ]
    probs = bell_povm().probabilities(kron(*rhos))
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def sample_counts(p: ParamPoint, nu: int, mode: EncodingMode = ANALYTIC, seed=0) -> CountVector:
    """Multinomial counts of ``nu`` photons over the four Bell ports."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    ss = _seed_sequence(seed)
    counts_ss, phase_ss = ss.spawn(2)
    if mode.kind == "analytic":
        probs = bell_probs(p)
    else:
        probs = finite_sample_bell_probs(p, mode, phase_ss)
    n = make_rng(counts_ss).multinomial(nu, probs)
    return CountVector(tuple(int(x) for x in n))


def loglik(counts, phi, delta):
    """``Σ N_k log p_k(φ, Δ)``; broadcasts over ``phi`` and ``delta``."""
    n = np.asarray(counts, dtype=float)
    return np.sum(xlogy(n, bell_probs_many(phi, delta)), axis=-1)


def raw_statistics(counts) -> tuple[float | None, float | None]:
    """``A = (N₃-N₄)/(N₃+N₄)`` and ``B = (N₁-N₂)/(N₁+N₂)``; ``None`` when undefined."""
    n1, n2, n3, n4 = (float(x) for x in counts)
    a = (n3 - n4) / (n3 + n4) if n3 + n4 > 0 else None
    b = (n1 - n2) / (n1 + n2) if n1 + n2 > 0 else None
    return a, b


def _seed_from_statistics(a, b):
    a = min(max(a, _A_MIN), 1.0)
    delta = np.sqrt(max(-np.log(a), 0.0) / 2)
    phi = 0.5 * np.arccos(np.clip(b / a, -1.0, 1.0))
    return phi, delta


def _on_boundary(phi, delta):
    return (phi <= _EDGE or phi >= np.pi / 2 - _EDGE or delta <= _EDGE
            or delta >= DELTA_MAX - _EDGE)


def mle(counts) -> Estimate:
    """Maximum-likelihood ``(φ, Δ)`` over ``[0, π/2] × [0, 3]``.

    A 128 × 128 grid locates the basin; bounded Nelder-Mead refines from the
    best grid point and from the raw-statistics seed, and the better of the
    two wins. ``converged`` is false when the solver fails or the estimate
    sits on the edge of the search box.
    """
    n = np.asarray(counts.n if isinstance(counts, CountVector) else counts, dtype=float)
    nu = n.sum()
    if nu <= 0:
        raise EmptyCountsError("no counts recorded")
    phis = np.linspace(0, np.pi / 2, GRID_SIZE)
    deltas = np.linspace(0, DELTA_MAX, GRID_SIZE)
    L = loglik(n, phis[:, None], deltas[None, :])
    i, j = np.unravel_index(np.argmax(L), L.shape)
    starts = [(phis[i], deltas[j])]
    a, b = raw_statistics(n)
    if a is not None and b is not None:
        starts.append(_seed_from_statistics(a, b))

    def objective(x):
        v = loglik(n, x[0], x[1]) / nu
        return -v if np.isfinite(v) else 1e300

    best = None
    for x0 in starts:
        res = minimize(
            objective, np.asarray(x0, dtype=float), method="Nelder-Mead",
            bounds=[(0.0, np.pi / 2), (0.0, DELTA_MAX)],
            options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000},
        )
        if best is None or res.fun < best.fun:
            best = res
    phi_hat, delta_hat = (float(v) for v in best.x)
    return Estimate(
        phi_hat=phi_hat,
        delta_hat=delta_hat,
        loglik=float(loglik(n, phi_hat, delta_hat)),
        converged=bool(best.success) and not _on_boundary(phi_hat, delta_hat),
    )


def mle_many(counts: np.ndarray):
    """Vectorised MLE for an ``(m, 4)`` array of count vectors.

    Where the raw statistics land inside the physical region the stationary
    point of the likelihood is available in closed form
    (``e^{-2Δ²} = A``, ``e^{-2Δ²} cos 2φ = B``) and is the global maximum,
    since the log-likelihood is concave in ``(A, B)``. Remaining rows go
    through :func:`mle`.

    Returns ``(phi_hat, delta_hat, converged)`` arrays.
    """
    n = np.asarray(counts, dtype=float)
    if n.ndim != 2 or n.shape[1] != 4:
        raise ValueError("counts must have shape (m, 4)")
    n12 = n[:, 0] + n[:, 1]
    n34 = n[:, 2] + n[:, 3]
    with np.errstate(divide="ignore", invalid="ignore"):
        A = (n[:, 2] - n[:, 3]) / n34
        B = (n[:, 0] - n[:, 1]) / n12
        ok = (n12 > 0) & (n34 > 0) & (A > _A_MIN) & (np.abs(B) <= A)
        # -log A computed as -log1p(-2 N4 / (N3 + N4)) for accuracy near A = 1
        delta = np.sqrt(np.maximum(-np.log1p(-2 * n[:, 3] / n34), 0.0) / 2)
        phi = 0.5 * np.arccos(np.clip(B / A, -1.0, 1.0))
    phi = np.where(ok, phi, np.nan)
    delta = np.where(ok, delta, np.nan)
    conv = ok & ~((n[:, 3] == 0) | (np.abs(B) == A))
    for k in np.flatnonzero(~ok):
        e = mle(n[k])
        phi[k], delta[k], conv[k] = e.phi_hat, e.delta_hat, e.converged
    return phi, delta, conv


def _covariance(phi_hat, delta_hat) -> np.ndarray:
    cov = np.cov(np.vstack([phi_hat, delta_hat]), ddof=1)
    if not np.all(np.isfinite(cov)) or np.linalg.det(cov) <= 1e-14 * np.prod(np.diag(cov)):
        raise SingularCovarianceError(f"estimate covariance is singular: {cov.tolist()}")
    return cov


def _merit_from_estimates(setting, phi_hat, delta_hat, nu):
    cov = _covariance(phi_hat, delta_hat)
    fim = np.linalg.inv(nu * cov)
    q2 = qfim_analytic(setting, copies=2)
    merit = figure_of_merit(fim, q2)
    return cov, fim, merit, fim[0, 0] / q2[0, 0], fim[1, 1] / q2[1, 1]


def run_experiment(setting, nu: int = 10_000, reps: int = 400, mode: EncodingMode = ANALYTIC,
                   seed=0, resamples: int = 100, mc_scheme: str = "pooled") -> ExperimentRecord:
    """Repeat count sampling and MLE ``reps`` times and aggregate.

    The Fisher matrix is inferred as ``(ν V)⁻¹`` from the covariance ``V`` of
    the estimates and compared against the two-copy QFIM at the true
    setting. ``resamples > 0`` attaches Monte Carlo error bars.
    """
    setting = ParamPoint(*setting).checked()
    if reps < 2:
        raise ValueError("reps must be >= 2")
    if nu < 1:
        raise ValueError("nu must be >= 1")
    root = _seed_sequence(seed)
    phase_ss, reps_ss, mc_ss = root.spawn(3)
    rep_seeds = reps_ss.spawn(reps)
    if mode.kind == "analytic":
        fixed = bell_probs(setting)
    elif not mode.redraw:
        fixed = finite_sample_bell_probs(setting, mode, phase_ss)
    else:
        fixed = None
    counts = np.empty((reps, 4), dtype=np.int64)
    for r, ss in enumerate(rep_seeds):
        count_ss, ph_ss = ss.spawn(2)
        probs = fixed if fixed is not None else finite_sample_bell_probs(setting, mode, ph_ss)
        counts[r] = make_rng(count_ss).multinomial(nu, probs)
    phi_hat, delta_hat, conv = mle_many(counts)
    ll = loglik(counts, phi_hat, delta_hat)
    estimates = [Estimate(float(a), float(b), float(c), bool(d))
                 for a, b, c, d in zip(phi_hat, delta_hat, ll, conv)]
    cov, fim, merit, gp, gd = _merit_from_estimates(setting, phi_hat, delta_hat, nu)
    rec = ExperimentRecord(
        setting=setting, nu_target=nu, repetitions=reps, estimates=estimates, counts=counts,
        covariance=cov, fim_inferred=fim, merit=merit, gamma_phi=gp, gamma_delta=gd,
        mode=mode, seed=seed if isinstance(seed, (int, np.integer)) else None,
    )
    if resamples > 0:
        spread = monte_carlo_spread(rec, resamples, mc_ss, mc_scheme)
        rec.merit_error = spread["merit"]
        rec.gamma_phi_error = spread["gamma_phi"]
        rec.gamma_delta_error = spread["gamma_delta"]
        rec.mc_resamples = resamples
    return rec


def monte_carlo_spread(record: ExperimentRecord, resamples: int = 100, seed=0,
                       scheme: str = "pooled") -> dict:
    """Standard deviations of merit and ratios over Poisson-resampled datasets.

    ``scheme="pooled"``: every resample draws a fresh ``reps × 4`` table
    with each entry Poisson about the observed mean count of its port.
    ``scheme="per_rep"``: each repetition's counts are redrawn Poisson
    about that repetition's own observed counts.
    """
    if resamples < 2:
        raise ValueError("resamples must be >= 2")
    if scheme not in ("pooled", "per_rep"):
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    counts = np.asarray(record.counts)
    rng = make_rng(_seed_sequence(seed))
    means = counts.mean(axis=0)
    out = np.empty((resamples, 3))
    for k in range(resamples):
        c = rng.poisson(means, size=counts.shape) if scheme == "pooled" else rng.poisson(counts)
        phi_hat, delta_hat, _ = mle_many(c)
        _, _, merit, gp, gd = _merit_from_estimates(record.setting, phi_hat, delta_hat, c.sum(1).mean())
        out[k] = merit, gp, gd
    sd = out.std(axis=0, ddof=1)
    return {"merit": float(sd[0]), "gamma_phi": float(sd[1]), "gamma_delta": float(sd[2])}


def monte_carlo_error(record: ExperimentRecord, resamples: int = 100, seed=0,
                      scheme: str = "pooled") -> float:
    """Monte Carlo standard error of ``record.merit``."""
    return monte_carlo_spread(record, resamples, seed, scheme)["merit"]


def ratio_coordinates(record: ExperimentRecord) -> tuple[float, float]:
    """``(F̂_φφ/Q₂,φφ, F̂_ΔΔ/Q₂,ΔΔ)`` for placing a record on the trade-off diagram."""
    return record.gamma_phi, record.gamma_delta


DEFAULT_PHIS = tuple(np.pi * k for k in (1 / 16, 1 / 8, 1 / 4, 3 / 8, 7 / 16))
DEFAULT_DELTAS = (0.1, 0.3)
DEFAULT_SETTINGS = tuple(ParamPoint(phi, d) for d in DEFAULT_DELTAS for phi in DEFAULT_PHIS)
