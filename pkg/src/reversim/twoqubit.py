"""Two- and three-qubit pure-state scenarios.

Amplitudes are stored as tensors indexed by qubit: ``amps[a, b]`` for two
qubits, ``amps[a, b, c]`` for three, with qubit 0 the leftmost label.
Local operations act on one tensor axis; conditioning on an outcome is
amplitude filtering followed by renormalization, so everything stays pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .gpm import (
    KOutcomeMeasurement,
    Outcome,
    PartialMeasurement,
    k_outcome_operators,
    kraus,
    kraus_pair,
)
from . import rng as rng_mod
from .qcore import H, I2, X, Z, DegenerateStateError, PureState, as_operator

NORM_TOL = 1e-12
RENORM_TOL = 1e-9


def _normalized(amps: np.ndarray) -> np.ndarray:
    a = np.array(amps, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite amplitude")
    n = float(np.vdot(a, a).real)
    if abs(n - 1.0) > RENORM_TOL:
        raise ValueError(f"state norm^2 = {n!r} is not 1")
    a = a / math.sqrt(n)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MultiQubitState:
    amps: np.ndarray
    n_qubits = 0

    def __post_init__(self):
        a = np.asarray(self.amps)
        if a.shape != (2,) * self.n_qubits:
            a = a.reshape((2,) * self.n_qubits)
        object.__setattr__(self, "amps", _normalized(a))

    @classmethod
    def from_unnormalized(cls, amps):
        a = np.asarray(amps, dtype=complex)
        n = float(np.vdot(a, a).real)
        if not n > 0.0:
            raise DegenerateStateError("cannot normalize a zero vector")
        return cls(a / math.sqrt(n))

    @property
    def vector(self) -> np.ndarray:
        """Flat amplitudes; basis labels read as binary with qubit 0 most significant."""
        return self.amps.reshape(-1)

    def amplitude(self, bits: str) -> complex:
        return complex(self.amps[tuple(int(b) for b in bits)])

    def fidelity(self, other) -> float:
        return float(abs(np.vdot(self.amps, other.amps)) ** 2)

    def probabilities(self, qubit: int) -> np.ndarray:
        """Z-basis marginal ``[P(0), P(1)]`` of one qubit."""
        w = np.abs(self.amps) ** 2
        axes = tuple(i for i in range(self.n_qubits) if i != qubit)
        return w.sum(axis=axes)


class TwoQubitState(MultiQubitState):
    n_qubits = 2

    @classmethod
    def from_amplitudes(cls, a00, a01, a10, a11):
        return cls(np.array([[a00, a01], [a10, a11]]))


class ThreeQubitState(MultiQubitState):
    n_qubits = 3


def product_state(*states: PureState):
    amps = states[0].vector
    for s in states[1:]:
        amps = np.multiply.outer(amps, s.vector)
    return {2: TwoQubitState, 3: ThreeQubitState}[len(states)](amps)


def bell_phi_plus() -> TwoQubitState:
    return TwoQubitState.from_amplitudes(1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2))


def _apply_tensor(op: np.ndarray, qubit: int, amps: np.ndarray) -> np.ndarray:
    out = np.tensordot(as_operator(op), amps, axes=([1], [qubit]))
    return np.moveaxis(out, 0, qubit)


def apply_local(op, qubit: int, state: MultiQubitState):
    """Apply ``op`` to one qubit; returns the renormalized state and ``||op psi||^2``."""
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit index {qubit} out of range")
    out = _apply_tensor(op, qubit, state.amps)
    norm_sq = float(np.vdot(out, out).real)
    if not norm_sq > 0.0:
        raise DegenerateStateError("local operation annihilated the state")
    return type(state).from_unnormalized(out), norm_sq


def concurrence(state: TwoQubitState) -> float:
    a = state.amps
    return float(min(1.0, 2.0 * abs(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])))


def concurrence_after_m(p: float, q: float) -> float:
    return 2 * math.sqrt((1 - p) * (1 - q)) / (2 - p - q)


def concurrence_after_mbar(p: float, q: float) -> float:
    return 2 * math.sqrt(p * q) / (p + q)


@dataclass(frozen=True)
class AmplificationReport:
    outcome: Outcome
    C_before: float
    reversal_success: bool
    C_after: Optional[float]
    success_probability: float
    fidelity_after: Optional[float] = None


def amplification_success_probability(pm: PartialMeasurement) -> float:
    """Exact chance that Alice's measurement on Phi+ is undone, by branch enumeration."""
    phi = bell_phi_plus()
    total = 0.0
    for o in Outcome:
        m = kraus(pm, o)
        amps = _apply_tensor(X @ m @ X @ m, 0, phi.amps)
        total += float(np.vdot(amps, amps).real)
    return total


def epr_amplification(p: float, q: float, rng) -> AmplificationReport:
    """Partially measure Alice's half of Phi+, then try to reverse it (two draws)."""
    pm = PartialMeasurement(p, q)
    pm.require_invertible()
    phi = bell_phi_plus()
    m_ops = dict(zip(Outcome, kraus_pair(pm)))

    def measure(state):
        v = _apply_tensor(m_ops[Outcome.M], 0, state.amps)
        p_m = float(np.vdot(v, v).real)
        o = Outcome.M if rng.random() < p_m else Outcome.MBAR
        return o, apply_local(m_ops[o], 0, state)[0]

    o, post = measure(phi)
    c_before = concurrence(post)
    flipped = apply_local(X, 0, post)[0]
    o2, after = measure(flipped)
    after = apply_local(X, 0, after)[0]
    success_p = amplification_success_probability(pm)
    if o2 is not o:
        return AmplificationReport(o, c_before, False, None, success_p)
    return AmplificationReport(o, c_before, True, concurrence(after), success_p, after.fidelity(phi))


def _measure_alice(amps, d_m, d_b, u):
    w = np.abs(amps) ** 2
    p_m = d_m[0] ** 2 * w[:, 0, :].sum(axis=1) + d_m[1] ** 2 * w[:, 1, :].sum(axis=1)
    is_b = ~(u < p_m)
    c = np.where(is_b[:, None], np.asarray(d_b), np.asarray(d_m))
    out = amps * c[:, :, None]
    norm = np.sqrt(np.sum(np.abs(out) ** 2, axis=(1, 2)))
    return is_b, out / norm[:, None, None]


def amplification_ensemble(p: float, q: float, trials: int, seed: int) -> dict:
    """Vectorized :func:`epr_amplification` over ``trials`` counter-based streams.

    Trial ``i`` uses ``Stream(seed, i)``: draw 0 measures, draw 1 reverses.
    """
    pm = PartialMeasurement(p, q)
    pm.require_invertible()
    d_m, d_b = pm.diagonal(Outcome.M), pm.diagonal(Outcome.MBAR)
    keys = rng_mod.stream_keys(seed, np.arange(trials, dtype=np.uint64))
    amps = np.broadcast_to(bell_phi_plus().amps, (trials, 2, 2)).astype(complex)
    is_b, post = _measure_alice(amps, d_m, d_b, rng_mod.uniforms(keys, 0))
    c_before = 2 * np.abs(post[:, 0, 0] * post[:, 1, 1] - post[:, 0, 1] * post[:, 1, 0])
    is_b2, after = _measure_alice(post[:, ::-1, :], d_m, d_b, rng_mod.uniforms(keys, 1))
    after = after[:, ::-1, :]
    ok = is_b2 == is_b
    c_after = 2 * np.abs(after[:, 0, 0] * after[:, 1, 1] - after[:, 0, 1] * after[:, 1, 0])
    phi = bell_phi_plus().amps
    fid = np.abs(np.einsum("ab,nab->n", phi.conj(), after)) ** 2
    return {
        "trials": trials,
        "success_rate": float(np.mean(ok)),
        "oracle_success_probability": amplification_success_probability(pm),
        "outcome_mbar": is_b,
        "reversal_success": ok,
        "C_before": c_before,
        "C_after": np.where(ok, c_after, np.nan),
        "max_fidelity_deficit": float(np.max(1 - fid[ok])) if ok.any() else math.nan,
    }


def _kraus_set(choice) -> list[np.ndarray]:
    if isinstance(choice, PartialMeasurement):
        return list(kraus_pair(choice))
    if isinstance(choice, KOutcomeMeasurement):
        return k_outcome_operators(choice)
    if isinstance(choice, str):
        c = choice.upper()
        if c == "Z":
            return [np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)]
        if c == "X":
            return [H @ np.diag([1, 0]) @ H, H @ np.diag([0, 1]) @ H]
        if c == "I":
            return [I2.copy()]
        raise ValueError(f"unknown measurement choice {choice!r}")
    ops = [as_operator(m) for m in choice]
    if not ops:
        raise ValueError("empty Kraus set")
    return ops


def bob_marginal(state: TwoQubitState, alice_choice, bob_basis: str = "Z") -> np.ndarray:
    """Bob's outcome distribution, summed over Alice's unread outcomes."""
    bob = _kraus_set(bob_basis)
    probs = np.zeros(len(bob))
    for ka in _kraus_set(alice_choice):
        after_a = _apply_tensor(ka, 0, state.amps)
        for j, kb in enumerate(bob):
            v = _apply_tensor(kb, 1, after_a)
            probs[j] += float(np.vdot(v, v).real)
    return probs


def no_signaling_check(pm_choices: Sequence, basis_choices: Sequence[str] = ("Z", "X"), state: TwoQubitState | None = None) -> float:
    """Max deviation of Bob's marginals across Alice's choices, over Bob's bases.

    Choices may be :class:`PartialMeasurement`, :class:`KOutcomeMeasurement`,
    ``"Z"``/``"X"``/``"I"``, or an explicit list of Kraus operators.
    """
    state = bell_phi_plus() if state is None else state
    worst = 0.0
    for basis in basis_choices:
        marginals = [bob_marginal(state, c, basis) for c in pm_choices]
        for m in marginals[1:]:
            worst = max(worst, float(np.max(np.abs(m - marginals[0]))))
    return worst


# --- teleportation -------------------------------------------------------

CNOT01 = np.zeros((2, 2, 2, 2), dtype=complex)
for _a in range(2):
    for _b in range(2):
        CNOT01[_a, _a ^ _b, _a, _b] = 1.0


def teleport_prepare(psi: PureState) -> ThreeQubitState:
    """``|psi>|Phi+>`` after CNOT (control 0, target 1) and H on qubit 0."""
    amps = np.multiply.outer(psi.vector, bell_phi_plus().amps)
    amps = np.tensordot(CNOT01, amps, axes=([2, 3], [0, 1]))
    amps = _apply_tensor(H, 0, amps)
    return ThreeQubitState(amps)


def teleport_four_term(psi: PureState) -> ThreeQubitState:
    """``(1/2)[|00>psi + |01>X psi + |10>Z psi + |11>XZ psi]`` built term by term."""
    amps = np.zeros((2, 2, 2), dtype=complex)
    v = psi.vector
    for (a, b), op in {(0, 0): I2, (0, 1): X, (1, 0): Z, (1, 1): X @ Z}.items():
        amps[a, b] = 0.5 * (op @ v)
    return ThreeQubitState(amps)


def _bob_fidelity(amps: np.ndarray, psi: PureState) -> float:
    """<psi|rho_Bob|psi> for an unnormalized-then-normalized 3-qubit tensor."""
    w = np.tensordot(amps, psi.vector.conj(), axes=([2], [0]))
    return float(np.sum(np.abs(w) ** 2) / np.vdot(amps, amps).real)


def remote_readout_scenario(psi: PureState, p: float = 0.99, variant: str = "two_bit", rng=None) -> dict:
    """Bob's view after Alice acts on her two qubits of the teleportation state.

    ``two_bit``: Alice partially measures both qubits with ``q = 0`` and
    strength ``p``; we condition on both outcomes being m.  ``one_bit``: Alice
    projectively measures her second qubit and sends the bit.  With ``rng``,
    one run's random outcomes are drawn and reported as well.
    """
    state = teleport_prepare(psi)
    if variant == "two_bit":
        pm = PartialMeasurement(p, 0.0)
        m = kraus(pm, Outcome.M)
        amps = _apply_tensor(m, 1, _apply_tensor(m, 0, state.amps))
        post_prob = float(np.vdot(amps, amps).real)
        cond = ThreeQubitState.from_unnormalized(amps)
        bob_00 = PureState.from_vector(cond.amps[0, 0])
        report = {
            "variant": variant,
            "p": p,
            "postselection_probability": post_prob,
            "bob_fidelity": _bob_fidelity(cond.amps, psi),
            "bob_state_given_alice_00": [bob_00.alpha, bob_00.beta],
            "alice_00_weight": float(np.sum(np.abs(cond.amps[0, 0]) ** 2)),
        }
        if rng is not None:
            report["sampled_both_m"] = rng.random() < post_prob
        return report
    if variant == "one_bit":
        branches = {}
        for bit in (0, 1):
            sub = state.amps[:, bit, :]
            weight = float(np.sum(np.abs(sub) ** 2))
            cond = TwoQubitState(sub / math.sqrt(weight))
            bob = cond.probabilities(1)
            # the bit tells Bob which outcome carries |cos(theta/2)|^2
            branches[bit] = {
                "probability": weight,
                "state": cond,
                "bob_probabilities": bob,
                "cos2_half_theta": float(bob[bit]),
                "sin2_half_theta": float(bob[1 - bit]),
            }
        report = {"variant": variant, "branches": branches}
        if rng is not None:
            report["sampled_alice_bit"] = 0 if rng.random() < branches[0]["probability"] else 1
        return report
    raise ValueError(f"unknown variant {variant!r}")


def one_bit_expected_state(psi: PureState, bit: int) -> TwoQubitState:
    """``alpha|+>|bit> + beta|->|1-bit>`` on (Alice's first qubit, Bob)."""
    plus = np.array([1, 1]) / math.sqrt(2)
    minus = np.array([1, -1]) / math.sqrt(2)
    e = np.eye(2)
    return TwoQubitState(psi.alpha * np.multiply.outer(plus, e[bit]) + psi.beta * np.multiply.outer(minus, e[1 - bit]))
