"""Single-qubit pure states and the handful of fixed gates used everywhere else.

Operators are plain ``(2, 2)`` complex numpy arrays.  States are small frozen
value objects holding the two amplitudes of ``alpha|0> + beta|1>``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
RENORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
for _gate in (I2, X, Z, H):
    _gate.flags.writeable = False


class DegenerateStateError(ValueError):
    """Raised when a zero (or non-finite) vector would have to be normalized."""


def _check_finite(*values: complex) -> None:
    for v in values:
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise ValueError(f"non-finite amplitude {v!r}")


@dataclass(frozen=True)
class BlochAngles:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("angles must be finite")
        if not 0.0 <= self.theta <= math.pi:
            raise ValueError(f"theta={self.theta} outside [0, pi]")
        if not 0.0 <= self.phi < 2 * math.pi:
            raise ValueError(f"phi={self.phi} outside [0, 2pi)")
        if self.theta in (0.0, math.pi):
            # azimuth is meaningless at the poles
            object.__setattr__(self, "phi", 0.0)


@dataclass(frozen=True)
class PureState:
    """Normalized qubit state ``alpha|0> + beta|1>``.

    Construction renormalizes inputs whose norm is within ``RENORM_TOL`` of
    one and rejects anything further off.  Use :meth:`from_vector` for
    arbitrary unnormalized vectors.
    """

    alpha: complex
    beta: complex

    def __post_init__(self):
        a, b = complex(self.alpha), complex(self.beta)
        _check_finite(a, b)
        norm_sq = abs(a) ** 2 + abs(b) ** 2
        if abs(norm_sq - 1.0) > RENORM_TOL:
            raise ValueError(f"state norm^2 = {norm_sq!r} is not 1")
        if norm_sq != 1.0:
            s = math.sqrt(norm_sq)
            a, b = a / s, b / s
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def from_vector(cls, vec) -> "PureState":
        v = np.asarray(vec, dtype=complex).reshape(2)
        norm_sq = float(np.vdot(v, v).real)
        if not math.isfinite(norm_sq) or norm_sq <= 0.0:
            raise DegenerateStateError("cannot normalize a zero vector")
        v = v / math.sqrt(norm_sq)
        return cls(complex(v[0]), complex(v[1]))

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)

    def overlap(self, other: "PureState") -> complex:
        return self.alpha.conjugate() * other.alpha + self.beta.conjugate() * other.beta

    def fidelity(self, other: "PureState") -> float:
        return abs(self.overlap(other)) ** 2

    def angles(self) -> BlochAngles:
        """Recover Bloch angles, discarding global phase."""
        ra, rb = abs(self.alpha), abs(self.beta)
        theta = 2.0 * math.atan2(rb, ra)
        theta = min(max(theta, 0.0), math.pi)
        if ra == 0.0 or rb == 0.0:
            return BlochAngles(theta, 0.0)
        phi = (cmath.phase(self.beta) - cmath.phase(self.alpha)) % (2 * math.pi)
        if phi >= 2 * math.pi:
            phi = 0.0
        return BlochAngles(theta, phi)


def state_from_angles(angles: BlochAngles) -> PureState:
    """``cos(theta/2)|0> + exp(i phi) sin(theta/2)|1>``; alpha is real and >= 0."""
    half = angles.theta / 2.0
    return PureState(complex(math.cos(half)), cmath.exp(1j * angles.phi) * math.sin(half))


ZERO = PureState(1.0, 0.0)
ONE = PureState(0.0, 1.0)
PLUS = PureState(1 / math.sqrt(2), 1 / math.sqrt(2))
MINUS = PureState(1 / math.sqrt(2), -1 / math.sqrt(2))


def as_operator(op) -> np.ndarray:
    m = np.asarray(op, dtype=complex)
    if m.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("operator has non-finite entries")
    return m


def apply_operator(op, psi: PureState) -> tuple[np.ndarray, float]:
    """Return ``(op @ psi, ||op @ psi||^2)`` without renormalizing."""
    v = as_operator(op) @ psi.vector
    return v, float(np.vdot(v, v).real)


def is_hermitian(op, tol: float = HERMITIAN_TOL) -> bool:
    m = as_operator(op)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def is_unitary(op, tol: float = NORM_TOL) -> bool:
    m = as_operator(op)
    return bool(np.max(np.abs(m.conj().T @ m - I2)) <= tol)


def operators_close(a, b, tol: float = NORM_TOL) -> bool:
    """Max-entrywise absolute comparison."""
    return bool(np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol)


def expectation(op, psi: PureState) -> float:
    """``<psi|E|psi>`` for Hermitian ``E``."""
    if not is_hermitian(op):
        raise ValueError("expectation requires a Hermitian operator")
    v = psi.vector
    return float(np.vdot(v, as_operator(op) @ v).real)
