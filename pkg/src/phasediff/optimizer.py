"""Numerical search for the two-copy POVM that maximises ``Tr(Q₂⁻¹F₂)``.

A POVM with ``k`` outcomes of rank at most ``r`` on dimension ``d`` is
stored as ``k`` blocks ``A_k`` (``r × d``) with ``Π_k = A_k†A_k``. Stacking
the blocks gives a ``(k·r) × d`` matrix ``X`` and completeness is exactly
``X†X = 𝕀``, so the search runs on the complex Stiefel manifold: projected
gradient ascent with a QR retraction and Armijo backtracking.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .encoding import ParamPoint, make_rng
from .errors import InvalidPovmError, NoImprovementError
from .information import classical_fim, equatorial_family, figure_of_merit, qfim_analytic
from .linalg import Povm, dagger, mat_sqrt, orthonormalize, random_isometry
from .measurement import BELL_STATES, complex_from_json, complex_to_json

GRAD_TOL = 1e-7
MAX_ITER = 2000
FD_STEP = 1e-6
INIT_NOISE = 0.2
ARMIJO_C = 1e-4
MIN_STEP = 1e-14


@dataclass
class PovmParametrization:
    """Stacked-block form of a POVM; ``blocks`` has shape ``(k, r, d)``."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        if b.ndim != 3:
            raise ValueError("blocks must have shape (k, r, d)")
        self.blocks = b

    @property
    def k_outcomes(self) -> int:
        return self.blocks.shape[0]

    @property
    def rank(self) -> int:
        return self.blocks.shape[1]

    @property
    def dim(self) -> int:
        return self.blocks.shape[2]

    @property
    def stacked(self) -> np.ndarray:
        return self.blocks.reshape(-1, self.dim)

    @classmethod
    def from_stacked(cls, x: np.ndarray, k: int) -> "PovmParametrization":
        x = np.asarray(x, dtype=complex)
        return cls(x.reshape(k, x.shape[0] // k, x.shape[1]))

    @classmethod
    def from_povm(cls, povm: Povm, rank: int | None = None) -> "PovmParametrization":
        """Blocks ``A_k = √Π_k`` truncated to the ``rank`` largest eigenvalues."""
        r = povm.dim if rank is None else rank
        blocks = []
        for e in povm:
            w, v = np.linalg.eigh(e)
            w, v = w[::-1][:r], v[:, ::-1][:, :r]
            blocks.append(np.sqrt(np.clip(w, 0, None))[:, None] * dagger(v))
        return cls(np.array(blocks))

    def completeness_error(self) -> float:
        x = self.stacked
        return float(np.max(np.abs(dagger(x) @ x - np.eye(self.dim))))

    def elements(self) -> list:
        return [dagger(a) @ a for a in self.blocks]

    def povm(self, tol: float = 1e-9) -> Povm:
        return Povm(tuple(self.elements()), tol=tol)


@dataclass
class OptimizationTrace:
    iterations: list
    final_povm: Povm
    final_objective: float
    restarts_used: int
    start_objectives: list = field(default_factory=list)
    restart_objectives: list = field(default_factory=list)
    best_restart: int = 0
    parametrization: PovmParametrization | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "final_objective": self.final_objective,
            "restarts_used": self.restarts_used,
            "best_restart": self.best_restart,
            "start_objectives": self.start_objectives,
            "restart_objectives": self.restart_objectives,
            "iterations": [list(map(float, it)) for it in self.iterations],
            "final_povm": povm_to_dict(self.final_povm),
        }


def objective(povm: Povm, p) -> float:
    """``Tr(Q₂⁻¹F₂)`` of ``povm`` on two copies of the diffused equatorial qubit."""
    if povm.dim != 4:
        raise ValueError(f"objective needs a POVM on dimension 4, got {povm.dim}")
    p = ParamPoint(*p)
    fim = classical_fim(equatorial_family(copies=2), povm, p)
    return figure_of_merit(fim, qfim_analytic(p, copies=2))


class _BatchObjective:
    """``Tr(Q₂⁻¹F₂)`` for many stacked matrices at once.

    The probabilities are linear in the state, so differentiating the state
    once and contracting with each candidate reproduces the finite-difference
    Fisher matrix of :func:`objective` without re-deriving per candidate.
    """

    def __init__(self, p: ParamPoint, k: int, fd_step: float):
        fam = equatorial_family(copies=2)
        self.k = k
        self.rho = fam.state(*p)
        self.drho = np.stack(fam.derivatives(*p))
        self.qinv = np.linalg.inv(qfim_analytic(p, copies=2))

    def _probs(self, x, m):
        # x: (n, k*r, d) -> per-outcome sums over the rows of each block
        q = np.real(np.einsum("nid,de,nie->ni", x, m, x.conj()))
        return q.reshape(x.shape[0], self.k, -1).sum(axis=2)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        single = x.ndim == 2
        if single:
            x = x[None]
        prob = self._probs(x, self.rho)
        g = np.stack([self._probs(x, d) for d in self.drho], axis=1)  # (n, 2, k)
        keep = prob > 1e-12
        inv_p = np.where(keep, 1 / np.where(keep, prob, 1), 0.0)
        fim = np.einsum("nik,njk,nk->nij", g, g, inv_p)
        val = np.einsum("ij,nji->n", self.qinv, fim)
        return val[0] if single else val


def _euclidean_gradient(f: _BatchObjective, x: np.ndarray, h: float) -> np.ndarray:
    n = x.size
    eye = np.eye(n).reshape((n,) + x.shape)
    pert = np.concatenate([x + h * eye, x - h * eye, x + 1j * h * eye, x - 1j * h * eye])
    v = f(pert)
    d_re = (v[:n] - v[n:2 * n]) / (2 * h)
    d_im = (v[2 * n:3 * n] - v[3 * n:]) / (2 * h)
    return (d_re + 1j * d_im).reshape(x.shape)


def _riemannian_gradient(x, g):
    xg = dagger(x) @ g
    return g - x @ (xg + dagger(xg)) / 2


def _ascend(f, x, max_iter, grad_tol, fd_step):
    fx = float(f(x))
    trace = []
    t = 1.0
    for _ in range(max_iter):
        rg = _riemannian_gradient(x, _euclidean_gradient(f, x, fd_step))
        gnorm = float(np.linalg.norm(rg))
        trace.append((fx, gnorm))
        if gnorm < grad_tol:
            break
        t = min(2 * t, 1e3)
        while t > MIN_STEP:
            xn = orthonormalize(x + t * rg)
            fn = float(f(xn))
            if fn >= fx + ARMIJO_C * t * gnorm * gnorm:
                break
            t *= 0.5
        else:
            break
        x, fx = xn, fn
    return x, fx, trace


def bell_blocks(k: int, rank: int, dim: int = 4) -> np.ndarray:
    """Stacked matrix whose first four rows are the Bell bras; the rest zero."""
    x = np.zeros((k * rank, dim), dtype=complex)
    rows = [i * rank for i in range(min(k, 4))]
    for j, row in enumerate(rows):
        x[row] = BELL_STATES[j].conj()
    return x


def initial_point(restart: int, k: int, rank: int, rng: np.random.Generator, dim: int = 4):
    """Even restarts: noisy Bell blocks. Odd restarts: Haar-random stack."""
    n = k * rank
    if restart % 2 == 0:
        noise = rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))
        return orthonormalize(bell_blocks(k, rank, dim) + INIT_NOISE * noise / np.sqrt(2))
    return random_isometry(n, dim, rng)


def optimize_povm(p, k_outcomes: int = 4, restarts: int = 20, seed: int = 0, rank: int = 1,
                  max_iter: int = MAX_ITER, grad_tol: float = GRAD_TOL,
                  fd_step: float = FD_STEP, workers: int = 1) -> OptimizationTrace:
    """Best POVM over ``restarts`` independent manifold ascents.

    Restart ``i`` draws its start from the ``i``-th child of the seed, so
    the result does not depend on ``workers``. Ties go to the lowest index.
    """
    p = ParamPoint(*p).checked()
    if k_outcomes < 3:
        raise ValueError("k_outcomes must be >= 3 to resolve two parameters")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if k_outcomes * rank < 4:
        raise ValueError("k_outcomes * rank must be >= 4 to complete a POVM on dimension 4")
    f = _BatchObjective(p, k_outcomes, fd_step)
    seeds = np.random.SeedSequence(seed).spawn(restarts)

    def run(i):
        x0 = initial_point(i, k_outcomes, rank, make_rng(seeds[i]))
        f0 = float(f(x0))
        x, fx, tr = _ascend(f, x0, max_iter, grad_tol, fd_step)
        return f0, x, fx, tr

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, range(restarts)))
    else:
        results = [run(i) for i in range(restarts)]
    starts = [r[0] for r in results]
    finals = [r[2] for r in results]
    if all(fin <= s for s, fin in zip(starts, finals)):
        raise NoImprovementError("no restart improved on its starting objective")
    best = int(np.argmax(finals))
    par = PovmParametrization.from_stacked(results[best][1], k_outcomes)
    return OptimizationTrace(
        iterations=results[best][3],
        final_povm=par.povm(),
        final_objective=finals[best],
        restarts_used=restarts,
        start_objectives=starts,
        restart_objectives=finals,
        best_restart=best,
        parametrization=par,
    )


@dataclass
class PovmReport:
    ranks: list
    overlaps: np.ndarray
    projective: bool
    all_overlaps_nonzero: bool
    eigenvalues: list
    tol: float

    @property
    def rank_one(self) -> bool:
        return all(r == 1 for r in self.ranks)

    def to_dict(self) -> dict:
        return {
            "ranks": self.ranks,
            "rank_one": self.rank_one,
            "projective": self.projective,
            "all_overlaps_nonzero": self.all_overlaps_nonzero,
            "overlaps": self.overlaps.tolist(),
            "eigenvalues": [list(map(float, w)) for w in self.eigenvalues],
            "tol": self.tol,
        }


def analyze_povm(povm: Povm, tol: float = 1e-8) -> PovmReport:
    """Ranks, pairwise overlaps ``Tr(Π_mΠ_n)`` and projectivity of a POVM.

    ``tol`` is both the eigenvalue cutoff for rank and the threshold below
    which ``|Π² - Π|`` and an overlap count as zero.
    """
    els = list(povm)
    eig = [np.linalg.eigvalsh(e) for e in els]
    ranks = [int(np.sum(w > tol)) for w in eig]
    ov = np.array([[np.real(np.trace(a @ b)) for b in els] for a in els])
    projective = all(np.max(np.abs(e @ e - e)) <= tol for e in els)
    off = ov[~np.eye(len(els), dtype=bool)]
    return PovmReport(ranks, ov, bool(projective), bool(np.all(np.abs(off) > tol)), eig, tol)


def povm_to_dict(povm: Povm) -> dict:
    return {"dim": povm.dim, "elements": [complex_to_json(e) for e in povm]}


def povm_from_dict(d: dict, tol: float = 1e-9) -> Povm:
    try:
        els = tuple(complex_from_json(e) for e in d["elements"])
    except (KeyError, TypeError) as exc:
        raise InvalidPovmError(f"malformed POVM record: {exc!r}") from exc
    return Povm(els, tol=tol)


def save_povm(povm: Povm, path) -> None:
    Path(path).write_text(json.dumps(povm_to_dict(povm), indent=2))


def load_povm(path, tol: float = 1e-9) -> Povm:
    return povm_from_dict(json.loads(Path(path).read_text()), tol)


def complete_printed_povm(partial, clamp: bool = True) -> Povm:
    """Build a POVM from all-but-the-last elements printed to finite precision.

    The last element is ``𝕀 - Σ Π_k``. With ``clamp`` each element has its
    negative eigenvalues removed and the set is re-normalised by
    ``S^{-1/2} Π_k S^{-1/2}`` with ``S = Σ Π_k``, which restores exact
    completeness. Changes are of the order of the printing precision.
    """
    partial = [np.asarray(e, dtype=complex) for e in partial]
    partial = [(e + dagger(e)) / 2 for e in partial]
    dim = partial[0].shape[0]
    els = partial + [np.eye(dim) - sum(partial)]
    if not clamp:
        return Povm(tuple(els), tol=1e-3)
    clamped = []
    for e in els:
        w, v = np.linalg.eigh(e)
        clamped.append((v * np.clip(w, 0, None)) @ dagger(v))
    s_inv = np.linalg.inv(mat_sqrt(sum(clamped)))
    return Povm(tuple(s_inv @ e @ s_inv for e in clamped), tol=1e-9)


REFERENCE_POVM_FILE = "reference_povm_phi0_delta1.json"


def load_reference_povm(clamp: bool = True) -> Povm:
    """Rank-one four-outcome POVM for ``(φ, Δ) = (0, 1)`` printed to 4 decimals.

    The file stores the first three elements only; see
    :func:`complete_printed_povm`.
    """
    text = resources.files("phasediff.data").joinpath(REFERENCE_POVM_FILE).read_text()
    d = json.loads(text)
    return complete_printed_povm([complex_from_json(e) for e in d["elements"]], clamp=clamp)
