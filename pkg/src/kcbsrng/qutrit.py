"""Qutrit linear algebra for the five-observable KCBS scenario.

Observables are labelled 1..5 and a context is an adjacent pair on the
pentagon.  Outcome ``a = 1`` of observable ``A_i`` is the rank-1 projector
onto ``|psi_i>``; ``a = 0`` is its complement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

CONTEXTS: tuple[tuple[int, int], ...] = ((1, 2), (2, 3), (3, 4), (4, 5), (1, 5))
OUTCOMES: tuple[tuple[int, int], ...] = ((1, 1), (1, 0), (0, 1), (0, 0))
L_CLASSICAL = 3.0
L_QUANTUM = 4.0 * math.sqrt(5.0) - 5.0

_MIN_NORM = 1e-9
_TOL = 1e-12


class InvalidStateError(ValueError):
    """Raised for density matrices that are not Hermitian, unit-trace and PSD."""


class Context(NamedTuple):
    i: int
    j: int

    @property
    def index(self) -> int:
        return CONTEXTS.index((self.i, self.j))


def as_context(pair: Sequence[int] | Context) -> Context:
    i, j = (int(pair[0]), int(pair[1]))
    if (i, j) not in CONTEXTS:
        raise ValueError(f"({i}, {j}) is not a compatible pair; expected one of {CONTEXTS}")
    return Context(i, j)


ALL_CONTEXTS: tuple[Context, ...] = tuple(Context(*c) for c in CONTEXTS)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Ket3:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (3,):
            raise ValueError(f"a qutrit ket needs 3 amplitudes, got shape {amp.shape}")
        norm = np.linalg.norm(amp)
        if norm < _MIN_NORM:
            raise ValueError("cannot normalise a (near-)zero vector")
        object.__setattr__(self, "amplitudes", _frozen(amp / norm))

    @classmethod
    def basis(cls, n: int) -> "Ket3":
        v = np.zeros(3)
        v[n] = 1.0
        return cls(v)

    def inner(self, other: "Ket3") -> complex:
        """``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def density(self) -> "Density3":
        return Density3(self.projector())


@dataclass(frozen=True)
class Density3:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise InvalidStateError(f"expected a 3x3 matrix, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > _TOL:
            raise InvalidStateError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > _TOL:
            raise InvalidStateError(f"trace is {np.trace(m).real!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise InvalidStateError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def maximally_mixed(cls) -> "Density3":
        return cls(np.eye(3) / 3.0)


@dataclass(frozen=True)
class Projector3:
    """Rank-1 projector ``|psi><psi|`` and the associated +-1 observable."""

    vector: Ket3

    @property
    def matrix(self) -> np.ndarray:
        return self.vector.projector()

    def outcome(self, a: int) -> np.ndarray:
        """Projector for outcome ``a`` (1 -> |psi><psi|, 0 -> complement)."""
        p = self.matrix
        return p if a == 1 else np.eye(3) - p

    def observable(self) -> np.ndarray:
        return 2.0 * self.matrix - np.eye(3)


class JointDist(NamedTuple):
    p11: float
    p10: float
    p01: float
    p00: float

    def get(self, a: int, b: int) -> float:
        return self[OUTCOMES.index((a, b))]

    @property
    def p_unequal(self) -> float:
        return self.p10 + self.p01

    @property
    def p_equal(self) -> float:
        return self.p11 + self.p00


def kcbs_vectors() -> tuple[Ket3, ...]:
    """The five measurement vectors of the KCBS construction (real amplitudes)."""
    alpha = math.sqrt(math.sqrt(5.0) / 5.0)
    # cos^-1(pi/10) in the source is a secant; arccos would not give unit norm.
    b1 = -(math.sqrt(2.0) / 2.0) / math.cos(math.pi / 10.0)
    b34 = -(math.sqrt(2.0) / 2.0) * math.tan(math.pi / 10.0)
    b25 = -b1 * math.cos(math.pi / 5.0)
    g2 = b1 * math.sin(math.pi / 5.0)
    g4 = -math.sqrt(2.0) / 2.0
    rows = [
        (alpha, b1, 0.0),
        (alpha, b25, g2),
        (alpha, b34, -g4),
        (alpha, b34, g4),
        (alpha, b25, -g2),
    ]
    return tuple(Ket3(np.array(r)) for r in rows)


def _check_state(rho) -> np.ndarray:
    if isinstance(rho, Density3):
        return rho.matrix
    return Density3(rho).matrix


def joint_probs(rho: Density3, ctx: Sequence[int] | Context, vectors: Sequence[Ket3]) -> JointDist:
    """Born-rule joint distribution ``Tr(rho O^a_i O^b_j)`` for one context."""
    m = _check_state(rho)
    c = as_context(ctx)
    pi = Projector3(vectors[c.i - 1])
    pj = Projector3(vectors[c.j - 1])
    probs = []
    for a, b in OUTCOMES:
        op = pi.outcome(a) @ pj.outcome(b)
        probs.append(float(np.trace(m @ op).real))
    return JointDist(*probs)


def kcbs_value(rho: Density3, vectors: Sequence[Ket3]) -> float:
    """``L = sum over contexts of P(a_i != a_j) - P(a_i = a_j)``."""
    total = 0.0
    for ctx in ALL_CONTEXTS:
        d = joint_probs(rho, ctx, vectors)
        total += d.p_unequal - d.p_equal
    return total


def commutation_residual(i: int, j: int, vectors: Sequence[Ket3]) -> float:
    """Largest-magnitude entry of ``[A_i, A_j]``."""
    if i == j:
        return 0.0
    ai = Projector3(vectors[i - 1]).observable()
    aj = Projector3(vectors[j - 1]).observable()
    return float(np.max(np.abs(ai @ aj - aj @ ai)))


def hwp_projectors(theta1: float, theta2: float, theta3: float) -> tuple[Ket3, Ket3]:
    """Detector projection vectors for half-wave-plate angles (degrees).

    ``theta1``, ``theta2``, ``theta3`` are the plates in front of the
    measurement PBS network; the first vector is the detector-1 click, the
    second the detector-2 click.
    """
    t1, t2, t3 = (2.0 * math.radians(t) for t in (theta1, theta2, theta3))
    c1, s1 = math.cos(t1), math.sin(t1)
    c2, s2 = math.cos(t2), math.sin(t2)
    c3, s3 = math.cos(t3), math.sin(t3)
    first = np.array([c2, -s2 * c1, -s2 * s1])
    second = np.array([c3 * s2, c3 * c2 * c1 - s3 * s1, c3 * c2 * s1 + s3 * c1])
    return Ket3(first), Ket3(second)


# HWP5, HWP6, HWP8 settings and the observables seen on detectors 1 and 2.
HWP_TABLE: tuple[tuple[tuple[float, float, float], int, int], ...] = (
    ((0.0, 24.0, -12.95), 1, 2),
    ((144.0, 24.0, 12.95), 3, 2),
    ((144.0, 24.0, -12.95), 3, 4),
    ((108.0, 24.0, 12.95), 5, 4),
    ((108.0, 24.0, -12.95), 5, 1),
)


def depolarize(rho: Density3, v: float) -> Density3:
    """``v * rho + (1 - v) * I/3``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    m = _check_state(rho)
    return Density3(v * m + (1.0 - v) * np.eye(3) / 3.0)


def visibility_for_value(target: float, rho: Density3 | None = None, vectors=None) -> float:
    """Depolarizing visibility at which ``kcbs_value`` equals ``target``."""
    vectors = kcbs_vectors() if vectors is None else vectors
    rho = Ket3.basis(0).density() if rho is None else rho
    top = kcbs_value(rho, vectors)
    mixed = kcbs_value(Density3.maximally_mixed(), vectors)
    return (target - mixed) / (top - mixed)
