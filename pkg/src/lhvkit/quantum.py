"""Two-qubit quantum predictions for dichotomic polarization observables.

Observables live in the x-z plane of the Bloch sphere,
``O(a) = sin(a) sigma_x + cos(a) sigma_z``. Basis ordering is
``|uu>, |ud>, |du>, |dd>`` with ``u`` the +1 eigenvector of sigma_z.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)

OUTCOMES = (1, -1)
INDICES = (1, 2)
CONVENTIONS = ("bloch", "polarizer")
PERMUTATIONS = ("none", "labels", "directions", "both")


class QuantumError(ValueError):
    """Raised for malformed states or settings."""


@dataclass(frozen=True)
class QuantumState:
    """Two-qubit density operator."""

    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise QuantumError(f"density operator must be 4x4, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise QuantumError("density operator is not Hermitian")
        if abs(np.trace(rho) - 1.0) > 1e-12:
            raise QuantumError("density operator does not have unit trace")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise QuantumError("density operator is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_ket(cls, ket) -> "QuantumState":
        v = np.asarray(ket, dtype=complex).reshape(4)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise QuantumError("zero ket")
        v = v / norm
        rho = np.outer(v, v.conj())
        # Exact Hermitian symmetrization removes rounding asymmetry.
        return cls((rho + rho.conj().T) / 2)

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.real(np.trace(self.rho @ operator)))

    def reduced_a(self) -> np.ndarray:
        r = self.rho.reshape(2, 2, 2, 2)
        return np.einsum("ijkj->ik", r)

    def entanglement_entropy(self) -> float:
        """Von Neumann entropy (bits) of the A marginal."""
        ev = np.clip(np.linalg.eigvalsh(self.reduced_a()), 0.0, 1.0)
        ev = ev[ev > 1e-15]
        return float(-np.sum(ev * np.log2(ev)))


@dataclass(frozen=True)
class Setting:
    """Measurement direction on one side.

    With ``convention="polarizer"`` the angle is a polarizer rotation and is
    doubled to obtain the Bloch angle.
    """

    angle: float
    side: str
    convention: str = "bloch"

    def __post_init__(self) -> None:
        if self.side not in ("A", "B"):
            raise QuantumError(f"side must be 'A' or 'B', got {self.side!r}")
        if self.convention not in CONVENTIONS:
            raise QuantumError(f"unknown convention {self.convention!r}")

    @property
    def bloch_angle(self) -> float:
        return 2.0 * self.angle if self.convention == "polarizer" else float(self.angle)

    def observable(self) -> np.ndarray:
        a = self.bloch_angle
        return np.sin(a) * SIGMA_X + np.cos(a) * SIGMA_Z

    def projector(self, outcome: int) -> np.ndarray:
        return (IDENTITY + outcome * self.observable()) / 2


@dataclass(frozen=True)
class PredictionSet:
    """Quantum probabilities for two settings per side.

    ``q_joint[(i, j, a, b)]``, ``q_a[(i, a)]`` and ``q_b[(j, b)]`` with
    ``i, j`` in {1, 2} and ``a, b`` in {+1, -1}.
    """

    q_joint: Mapping[tuple[int, int, int, int], float]
    q_a: Mapping[tuple[int, int], float]
    q_b: Mapping[tuple[int, int], float]
    tol: float = field(default=1e-12, compare=False)

    def __post_init__(self) -> None:
        tol = self.tol
        for i, j in itertools.product(INDICES, INDICES):
            s = sum(self.q_joint[(i, j, a, b)] for a in OUTCOMES for b in OUTCOMES)
            if abs(s - 1.0) > tol:
                raise QuantumError(f"joint probabilities for ({i},{j}) sum to {s}")
            for a in OUTCOMES:
                m = sum(self.q_joint[(i, j, a, b)] for b in OUTCOMES)
                if abs(m - self.q_a[(i, a)]) > tol:
                    raise QuantumError("A marginal inconsistent with joint")
            for b in OUTCOMES:
                m = sum(self.q_joint[(i, j, a, b)] for a in OUTCOMES)
                if abs(m - self.q_b[(j, b)]) > tol:
                    raise QuantumError("B marginal inconsistent with joint")
        for k in INDICES:
            if abs(sum(self.q_a[(k, a)] for a in OUTCOMES) - 1.0) > tol:
                raise QuantumError("A marginals not normalized")
            if abs(sum(self.q_b[(k, b)] for b in OUTCOMES) - 1.0) > tol:
                raise QuantumError("B marginals not normalized")

    def correlation(self, i: int, j: int) -> float:
        return sum(a * b * self.q_joint[(i, j, a, b)] for a in OUTCOMES for b in OUTCOMES)

    def correlations(self) -> dict[tuple[int, int], float]:
        return {(i, j): self.correlation(i, j) for i in INDICES for j in INDICES}

    def conditional_a_given_b(self, i: int, a: int, j: int, b: int) -> float:
        """Q(A_i = a | B_j = b)."""
        qb = self.q_b[(j, b)]
        if qb == 0:
            raise QuantumError("conditioning on a zero-probability outcome")
        return self.q_joint[(i, j, a, b)] / qb

    def conditional_b_given_a(self, j: int, b: int, i: int, a: int) -> float:
        qa = self.q_a[(i, a)]
        if qa == 0:
            raise QuantumError("conditioning on a zero-probability outcome")
        return self.q_joint[(i, j, a, b)] / qa

    def permute_labels(self) -> "PredictionSet":
        """Swap outcome labels o <-> e on both sides."""
        return PredictionSet(
            {(i, j, a, b): self.q_joint[(i, j, -a, -b)] for (i, j, a, b) in self.q_joint},
            {(i, a): self.q_a[(i, -a)] for (i, a) in self.q_a},
            {(j, b): self.q_b[(j, -b)] for (j, b) in self.q_b},
        )

    def rows(self) -> list[tuple[int, int, int, int, float]]:
        return [(i, j, a, b, self.q_joint[(i, j, a, b)])
                for i in INDICES for j in INDICES for a in OUTCOMES for b in OUTCOMES]


def make_bell_state(kind: str) -> QuantumState:
    """Return ``(|ud> -/+ |du>)/sqrt(2)``; ``psi1`` takes the minus sign."""
    signs = {"psi1": -1.0, "psi2": 1.0}
    if kind not in signs:
        raise QuantumError(f"unknown Bell state {kind!r}")
    return QuantumState.from_ket([0.0, 1.0, signs[kind], 0.0])


def make_giustina_state(r: float) -> QuantumState:
    """Return ``C(|HV> + r|VH>)`` with ``C = 1/sqrt(1 + r^2)``; H is sigma_z = +1."""
    if not np.isfinite(r) or r < 0:
        raise QuantumError("r must be finite and nonnegative")
    return QuantumState.from_ket([0.0, 1.0, r, 0.0])


def make_larsson_state(xi: float) -> QuantumState:
    """Return the normalized ``(1 - 2 cos xi)|00> + sin xi (|10> + |01>)``."""
    if not 0 < xi < np.pi / 2:
        raise QuantumError("xi must lie in (0, pi/2)")
    return QuantumState.from_ket([1 - 2 * np.cos(xi), np.sin(xi), np.sin(xi), 0.0])


def random_pure_state(rng: np.random.Generator) -> QuantumState:
    """Haar-random pure two-qubit state."""
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return QuantumState.from_ket(v)


def make_state(kind: str, **params) -> QuantumState:
    """Factory used by configuration files and the CLI."""
    if kind in ("psi1", "psi2"):
        return make_bell_state(kind)
    if kind == "giustina":
        return make_giustina_state(float(params.get("r", 3.0)))
    if kind == "larsson":
        return make_larsson_state(float(params.get("xi", 0.1)))
    raise QuantumError(f"unknown state kind {kind!r}")


def _check_opposite(a: Setting, b: Setting) -> None:
    if a.side != "A" or b.side != "B":
        raise QuantumError("settings must be on sides A and B respectively")


def correlation(state: QuantumState, a: Setting, b: Setting) -> float:
    """Return ``tr(rho (A x B))``."""
    _check_opposite(a, b)
    return state.expectation(np.kron(a.observable(), b.observable()))


def prediction_set(state: QuantumState, a1: Setting, a2: Setting,
                   b1: Setting, b2: Setting) -> PredictionSet:
    """All joint and marginal outcome probabilities via projector traces."""
    sa = {1: a1, 2: a2}
    sb = {1: b1, 2: b2}
    for s in sa.values():
        if s.side != "A":
            raise QuantumError("a-settings must be on side A")
    for s in sb.values():
        if s.side != "B":
            raise QuantumError("b-settings must be on side B")
    q_joint = {}
    for i, j, a, b in itertools.product(INDICES, INDICES, OUTCOMES, OUTCOMES):
        op = np.kron(sa[i].projector(a), sb[j].projector(b))
        q_joint[(i, j, a, b)] = state.expectation(op)
    q_a = {(i, a): state.expectation(np.kron(sa[i].projector(a), IDENTITY))
           for i in INDICES for a in OUTCOMES}
    q_b = {(j, b): state.expectation(np.kron(IDENTITY, sb[j].projector(b)))
           for j in INDICES for b in OUTCOMES}
    return PredictionSet(q_joint, q_a, q_b)


def theta_settings(theta: float) -> tuple[Setting, Setting, Setting, Setting]:
    """Observables A1 = 0, A2 = 2 theta, B1 = theta, B2 = 3 theta (Bloch angles)."""
    return (Setting(0.0, "A"), Setting(2 * theta, "A"),
            Setting(theta, "B"), Setting(3 * theta, "B"))


GIUSTINA_ANGLES_DEG = {"a1": 85.6, "a2": 118.0, "b1": -5.4, "b2": 25.9}


def giustina_settings() -> tuple[Setting, Setting, Setting, Setting]:
    """Reported polarizer angles of the Eberhard experiment."""
    g = {k: np.deg2rad(v) for k, v in GIUSTINA_ANGLES_DEG.items()}
    return (Setting(g["a1"], "A", "polarizer"), Setting(g["a2"], "A", "polarizer"),
            Setting(g["b1"], "B", "polarizer"), Setting(g["b2"], "B", "polarizer"))


def permute_directions(state: QuantumState) -> QuantumState:
    """Swap H <-> V on both sides (conjugation by sigma_x on each qubit)."""
    xx = np.kron(SIGMA_X, SIGMA_X)
    return QuantumState(xx @ state.rho @ xx)


def scenario_prediction(state: QuantumState, settings, permute: str = "none") -> PredictionSet:
    """Prediction set with an optional label and/or direction permutation.

    The direction swap acts on the state, so it cannot be expressed as a
    transform of an existing PredictionSet; the label swap can.
    """
    if permute not in PERMUTATIONS:
        raise QuantumError(f"unknown permutation {permute!r}")
    if permute in ("directions", "both"):
        state = permute_directions(state)
    pred = prediction_set(state, *settings)
    if permute in ("labels", "both"):
        pred = pred.permute_labels()
    return pred
