"""Bell measurement on two qubits and its compilation as a quantum walk.

Walk state indexing: position ``x`` and coin ``c`` map to the flat index
``(x - x_min) * 2 + c`` with positions in ascending order. The conditional
translation moves coin 0 to ``x + 1`` and coin 1 to ``x - 1``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import ParamPoint
from .errors import NonUnitaryCoinError, WalkRangeError
from .linalg import HADAMARD, SIGMA_X, SIGMA_Z, Povm, dagger

UNITARY_TOL = 1e-12
DETERMINISTIC_TOL = 1e-10

_S = 1 / np.sqrt(2)
BELL_LABELS = ("Phi+", "Phi-", "Psi+", "Psi-")
# basis order |00>, |01>, |10>, |11>
BELL_STATES = np.array(
    [
        [_S, 0, 0, _S],
        [_S, 0, 0, -_S],
        [0, _S, _S, 0],
        [0, _S, -_S, 0],
    ],
    dtype=complex,
)


def bell_povm() -> Povm:
    """Projectors onto Φ+, Φ-, Ψ+, Ψ- (in that order)."""
    return Povm.from_vectors(BELL_STATES)


def bell_probs(p: ParamPoint) -> np.ndarray:
    """Closed-form Bell-port probabilities for two copies of the diffused equatorial qubit."""
    phi, delta = p
    r = np.exp(-2 * delta * delta)
    c = r * np.cos(2 * phi)
    return np.array([0.25 * (1 + c), 0.25 * (1 - c), 0.25 * (1 + r), 0.25 * (1 - r)])


def bell_probs_many(phi, delta) -> np.ndarray:
    """Vectorised :func:`bell_probs`; returns an array of shape ``(..., 4)``."""
    phi, delta = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(delta, dtype=float))
    r = np.exp(-2 * delta * delta)
    c = r * np.cos(2 * phi)
    return 0.25 * np.stack([1 + c, 1 - c, 1 + r, 1 - r], axis=-1)


def povm_equivalent(a: Povm, b: Povm, tol: float = 1e-9):
    """Match the outcomes of two POVMs up to relabelling.

    Returns ``(True, perm)`` where ``a[i]`` equals ``b[perm[i]]`` within
    ``tol`` entrywise, or ``(False, None)``. Elements are operators, so no
    phase freedom needs searching.
    """
    if len(a) != len(b) or a.dim != b.dim:
        return False, None
    n = len(a)
    dev = np.array([[np.max(np.abs(ea - eb)) for eb in b] for ea in a])
    if n <= 8:
        for perm in itertools.permutations(range(n)):
            if all(dev[i, perm[i]] < tol for i in range(n)):
                return True, tuple(perm)
        return False, None
    perm = tuple(int(j) for j in dev.argmin(axis=1))
    if len(set(perm)) == n and all(dev[i, perm[i]] < tol for i in range(n)):
        return True, perm
    return False, None


@dataclass(frozen=True)
class WalkSpec:
    """A discrete-time walk with position-dependent coins.

    ``steps[t]`` maps a position to its 2×2 coin for step ``t``; positions
    not listed get the identity. Each step is a coin layer followed by a
    conditional translation, except that the last step stops after its
    coins unless ``final_translation`` is set.
    """

    positions: tuple
    steps: tuple
    initial_positions: tuple
    final_translation: bool = False

    def __post_init__(self):
        pos = tuple(int(x) for x in self.positions)
        if list(pos) != list(range(pos[0], pos[0] + len(pos))):
            raise ValueError("positions must be a contiguous ascending range of integers")
        steps = []
        for t, coins in enumerate(self.steps):
            cm = {}
            for x, m in dict(coins).items():
                m = np.asarray(m, dtype=complex)
                if m.shape != (2, 2):
                    raise NonUnitaryCoinError(f"step {t}, x={x}: coin has shape {m.shape}")
                if np.max(np.abs(m @ dagger(m) - np.eye(2))) > UNITARY_TOL:
                    raise NonUnitaryCoinError(f"step {t}, x={x}: coin is not unitary")
                if int(x) not in pos:
                    raise WalkRangeError(f"step {t}: coin at x={x} outside the position range")
                cm[int(x)] = m
            steps.append(cm)
        init = tuple(int(x) for x in self.initial_positions)
        for x in init:
            if x not in pos:
                raise WalkRangeError(f"initial position {x} outside the position range")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "steps", tuple(steps))
        object.__setattr__(self, "initial_positions", init)
        self._check_range()

    @property
    def dim(self) -> int:
        return 2 * len(self.positions)

    @property
    def input_dim(self) -> int:
        return 2 * len(self.initial_positions)

    def index(self, x: int, c: int) -> int:
        return (x - self.positions[0]) * 2 + c

    def _check_range(self):
        # conservative reachability: any occupied site may spread both ways
        occupied = set(self.initial_positions)
        lo, hi = self.positions[0], self.positions[-1]
        n = len(self.steps)
        for t in range(n):
            if t == n - 1 and not self.final_translation:
                break
            occupied = {y for x in occupied for y in (x - 1, x + 1)}
            if min(occupied) < lo or max(occupied) > hi:
                raise WalkRangeError(
                    f"translation after step {t + 1} can leave the range [{lo}, {hi}]"
                )

    def with_steps(self, steps) -> "WalkSpec":
        return WalkSpec(self.positions, tuple(steps), self.initial_positions, self.final_translation)

    # JSON schema: {"positions": [...], "initial_positions": [...],
    #               "final_translation": bool,
    #               "steps": [[{"x": int, "matrix": [[[re, im], ...], ...]}, ...], ...]}
    def to_dict(self) -> dict:
        return {
            "positions": list(self.positions),
            "initial_positions": list(self.initial_positions),
            "final_translation": self.final_translation,
            "steps": [
                [{"x": x, "matrix": complex_to_json(m)} for x, m in sorted(coins.items())]
                for coins in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WalkSpec":
        try:
            steps = [
                {int(c["x"]): complex_from_json(c["matrix"]) for c in step} for step in d["steps"]
            ]
            return cls(
                tuple(d["positions"]),
                tuple(steps),
                tuple(d["initial_positions"]),
                bool(d.get("final_translation", False)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed walk specification: {exc!r}") from exc

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "WalkSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def complex_to_json(m) -> list:
    m = np.asarray(m, dtype=complex)
    if m.ndim == 0:
        return [float(m.real), float(m.imag)]
    return [complex_to_json(row) for row in m]


def complex_from_json(obj) -> np.ndarray:
    a = np.asarray(obj, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def translation_operator(spec: WalkSpec) -> np.ndarray:
    """Conditional shift on the full position ⊗ coin space.

    The shift is cyclic on the declared range so the operator is always a
    permutation; :class:`WalkSpec` rejects specs whose amplitude could
    actually wrap.
    """
    n = len(spec.positions)
    T = np.zeros((spec.dim, spec.dim), dtype=complex)
    for i in range(n):
        T[((i + 1) % n) * 2 + 0, i * 2 + 0] = 1
        T[((i - 1) % n) * 2 + 1, i * 2 + 1] = 1
    return T


def coin_operator(spec: WalkSpec, coins: dict) -> np.ndarray:
    C = np.eye(spec.dim, dtype=complex)
    for x, m in coins.items():
        i = spec.index(x, 0)
        C[i:i + 2, i:i + 2] = m
    return C


def build_walk_unitary(spec: WalkSpec) -> np.ndarray:
    T = translation_operator(spec)
    U = np.eye(spec.dim, dtype=complex)
    n = len(spec.steps)
    for t, coins in enumerate(spec.steps):
        U = coin_operator(spec, coins) @ U
        if t < n - 1 or spec.final_translation:
            U = T @ U
    return U


def bell_walk_spec() -> WalkSpec:
    """Three-step walk that performs a deterministic two-qubit Bell measurement.

    The first qubit is the path (``|0⟩`` at ``x=+1``, ``|1⟩`` at ``x=-1``),
    the second is the coin.
    """
    return WalkSpec(
        positions=tuple(range(-3, 4)),
        steps=(
            {1: SIGMA_Z, -1: SIGMA_X},
            {0: SIGMA_Z, 2: SIGMA_X, -2: SIGMA_X},
            {1: HADAMARD, -1: HADAMARD},
        ),
        initial_positions=(1, -1),
    )


BELL_READOUT = ((1, 0), (1, 1), (-1, 0), (-1, 1))


def input_embedding(spec: WalkSpec) -> np.ndarray:
    """Isometry from the input qubit pair into the walk space.

    Input basis ``|i c⟩`` sits at ``(initial_positions[i], c)``.
    """
    W = np.zeros((spec.dim, spec.input_dim), dtype=complex)
    for i, x in enumerate(spec.initial_positions):
        for c in (0, 1):
            W[spec.index(x, c), 2 * i + c] = 1
    return W


@dataclass
class PortPovm:
    elements: list
    residual: np.ndarray
    port_labels: list
    residual_norm: float
    deterministic: bool
    bell_permutation: tuple | None = None
    bell_deviation: float | None = None
    unitary: np.ndarray | None = field(default=None, repr=False)

    @property
    def povm(self) -> Povm:
        els = list(self.elements)
        if not self.deterministic:
            els.append(self.residual)
        return Povm(tuple(els), tol=1e-9)


def walk_to_povm(spec: WalkSpec, readout: Sequence[tuple] = BELL_READOUT) -> PortPovm:
    """POVM induced on the input subspace by reading out ``(x, c)`` ports."""
    readout = [(int(x), int(c)) for x, c in readout]
    if len(set(readout)) != len(readout):
        raise ValueError("readout ports must be distinct")
    U = build_walk_unitary(spec)
    V = U @ input_embedding(spec)
    elements = []
    for x, c in readout:
        row = V[spec.index(x, c)]
        # ⟨port|UW|ψ⟩ = row·ψ, so the element is row† row
        elements.append(np.outer(row.conj(), row))
    residual = np.eye(spec.input_dim) - sum(elements)
    rnorm = float(np.linalg.norm(residual, 2))
    out = PortPovm(
        elements=elements,
        residual=residual,
        port_labels=readout,
        residual_norm=rnorm,
        deterministic=rnorm < DETERMINISTIC_TOL,
        unitary=U,
    )
    if spec.input_dim == 4 and len(elements) == 4 and out.deterministic:
        ports = Povm(tuple(elements), tol=1e-9)
        ok, perm = povm_equivalent(ports, bell_povm(), tol=1e-9)
        if ok:
            out.bell_permutation = perm
            out.bell_deviation = float(
                max(np.max(np.abs(ports[i] - bell_povm()[perm[i]])) for i in range(4))
            )
    return out
