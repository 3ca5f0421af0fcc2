"""Generalized partial measurements and their probabilistic reversal.

A measurement with strengths ``(p, q)`` has the diagonal Kraus operators

    M_m    = sqrt(1-q)|0><0| + sqrt(1-p)|1><1|
    M_mbar = sqrt(q)  |0><0| + sqrt(p)  |1><1|

so ``q`` (``p``) is the probability that ``|0>`` (``|1>``) yields ``mbar``.
Reversal after outcome ``o`` is X, measure again, demand ``o`` again, X.
It succeeds with joint probability ``(1-p)(1-q)`` along the m path and
``pq`` along the mbar path, whatever the input state.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import X, PureState, apply_operator, expectation, operators_close

PROB_TOL = 1e-12


class NotInvertibleError(ValueError):
    pass


class DegenerateCollapseError(ValueError):
    """The requested outcome has zero Born probability."""


class Outcome(enum.Enum):
    M = "m"
    MBAR = "mbar"

    @property
    def other(self) -> "Outcome":
        return Outcome.MBAR if self is Outcome.M else Outcome.M

    @property
    def symbol(self) -> str:
        return "m" if self is Outcome.M else "b"


def _check_prob(name: str, x: float) -> float:
    x = float(x)
    if not (math.isfinite(x) and 0.0 <= x <= 1.0):
        raise ValueError(f"{name}={x!r} must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class PartialMeasurement:
    p: float
    q: float

    def __post_init__(self):
        object.__setattr__(self, "p", _check_prob("p", self.p))
        object.__setattr__(self, "q", _check_prob("q", self.q))

    @property
    def invertible(self) -> bool:
        return 0.0 < self.p < 1.0 and 0.0 < self.q < 1.0

    def require_invertible(self) -> None:
        if not self.invertible:
            raise NotInvertibleError(f"(p, q) = ({self.p}, {self.q}) has no inverse")

    def diagonal(self, o: Outcome) -> tuple[float, float]:
        """Diagonal entries of the Kraus operator for outcome ``o``."""
        if o is Outcome.M:
            return math.sqrt(1.0 - self.q), math.sqrt(1.0 - self.p)
        return math.sqrt(self.q), math.sqrt(self.p)

    def path_probability(self, o: Outcome) -> float:
        """Joint probability of outcome ``o`` followed by a successful reversal."""
        if o is Outcome.M:
            return (1.0 - self.p) * (1.0 - self.q)
        return self.p * self.q

    @property
    def success_probability(self) -> float:
        return self.path_probability(Outcome.M) + self.path_probability(Outcome.MBAR)


def kraus_pair(pm: PartialMeasurement) -> tuple[np.ndarray, np.ndarray]:
    return np.diag(pm.diagonal(Outcome.M)).astype(complex), np.diag(pm.diagonal(Outcome.MBAR)).astype(complex)


def kraus(pm: PartialMeasurement, o: Outcome) -> np.ndarray:
    return np.diag(pm.diagonal(o)).astype(complex)


def effects(pm: PartialMeasurement) -> tuple[np.ndarray, np.ndarray]:
    return tuple(m.conj().T @ m for m in kraus_pair(pm))


def outcome_probabilities(pm: PartialMeasurement, psi: PureState) -> tuple[float, float]:
    e_m, e_b = effects(pm)
    return expectation(e_m, psi), expectation(e_b, psi)


def collapse(pm: PartialMeasurement, psi: PureState, o: Outcome) -> tuple[PureState, float]:
    """Post-measurement state for outcome ``o`` and its Born probability."""
    vec, prob = apply_operator(kraus(pm, o), psi)
    if prob <= 0.0:
        raise DegenerateCollapseError(f"outcome {o.value} has probability 0")
    return PureState.from_vector(vec), prob


def _draw_outcome(pm: PartialMeasurement, psi: PureState, rng) -> Outcome:
    p_m, _ = outcome_probabilities(pm, psi)
    return Outcome.M if rng.random() < p_m else Outcome.MBAR


def sample_measure(pm: PartialMeasurement, psi: PureState, rng) -> tuple[Outcome, PureState]:
    """Draw an outcome with Born statistics (one draw from ``rng``) and collapse."""
    o = _draw_outcome(pm, psi, rng)
    return o, collapse(pm, psi, o)[0]


def inverse_kraus(pm: PartialMeasurement, o: Outcome) -> np.ndarray:
    pm.require_invertible()
    return X @ kraus(pm, o) @ X / math.sqrt(pm.path_probability(o))


def conditional_success(pm: PartialMeasurement, o: Outcome, psi: PureState) -> float:
    """P(o|o): chance that the X-measure step repeats ``o`` given ``psi`` before measuring.

    Computed by actually collapsing and re-measuring, not from the closed form.
    """
    post, _ = collapse(pm, psi, o)
    flipped = PureState.from_vector(X @ post.vector)
    e = kraus(pm, o)
    return expectation(e.conj().T @ e, flipped)


def reversal_round(pm: PartialMeasurement, post: PureState, o: Outcome, rng) -> tuple[bool, PureState]:
    """Attempt to undo outcome ``o`` on the collapsed state ``post``.

    Applies X, measures (one draw), and applies X again.  Success means the
    new outcome equals ``o``; the returned state is then the pre-measurement
    state.  On failure the returned state is the X-conjugated collapse onto
    the other outcome.
    """
    flipped = PureState.from_vector(X @ post.vector)
    o2 = _draw_outcome(pm, flipped, rng)
    after, _ = collapse(pm, flipped, o2)
    return o2 is o, PureState.from_vector(X @ after.vector)


@dataclass(frozen=True)
class KOutcomeMeasurement:
    """Diagonal K-outcome measurement ``M_k = sqrt(q_k)|0><0| + sqrt(p_k)|1><1|``."""

    p_list: tuple[float, ...]
    q_list: tuple[float, ...]

    def __post_init__(self):
        p = tuple(_check_prob("p_k", x) for x in self.p_list)
        q = tuple(_check_prob("q_k", x) for x in self.q_list)
        if len(p) != len(q) or len(p) < 2:
            raise ValueError("p_list and q_list need equal length K >= 2")
        if abs(math.fsum(p) - 1.0) > PROB_TOL or abs(math.fsum(q) - 1.0) > PROB_TOL:
            raise ValueError("p_list and q_list must each sum to 1")
        object.__setattr__(self, "p_list", p)
        object.__setattr__(self, "q_list", q)

    @classmethod
    def from_partial(cls, pm: PartialMeasurement) -> "KOutcomeMeasurement":
        return cls((1.0 - pm.p, pm.p), (1.0 - pm.q, pm.q))

    def __len__(self):
        return len(self.p_list)


def k_outcome_operators(km: KOutcomeMeasurement) -> list[np.ndarray]:
    return [np.diag([math.sqrt(q), math.sqrt(p)]).astype(complex) for p, q in zip(km.p_list, km.q_list)]


def k_outcome_inverse(km: KOutcomeMeasurement, k: int) -> np.ndarray:
    p, q = km.p_list[k], km.q_list[k]
    if p == 0.0 or q == 0.0:
        raise NotInvertibleError(f"outcome {k} has p_k={p}, q_k={q}")
    return X @ k_outcome_operators(km)[k] @ X / math.sqrt(p * q)


def k_outcome_probabilities(km: KOutcomeMeasurement, psi: PureState) -> list[float]:
    return [apply_operator(m, psi)[1] for m in k_outcome_operators(km)]


def completeness_error(kraus_ops: Sequence[np.ndarray]) -> float:
    total = sum(m.conj().T @ m for m in kraus_ops)
    return float(np.max(np.abs(total - np.eye(2))))


def is_identity(op, tol: float = PROB_TOL) -> bool:
    return operators_close(op, np.eye(2), tol)
