"""B92 key distribution with an optional eavesdropper.

Alice sends ``|0>`` for ``a = 0`` and ``|+>`` for ``a = 1``.  Bob measures Z
(``a' = 0``) or X (``a' = 1``) and keeps only rounds with result -1, which
forces ``a = 1 - a'``.  Eve either does nothing, intercepts and resends in
a fixed basis, or runs measure-and-reverse hexagons on the qubit.  A failed
reversal absorbs the qubit, which Bob sees as channel loss.

Round ``i`` draws from ``Stream(seed, i)`` in a fixed order: ``a``, ``a'``,
Eve's draws (two per hexagon, or one for intercept-resend), then Bob's.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rng_mod
from .chain import _measure_arrays, enumerate_exact, run_hexagon
from .gpm import Outcome, PartialMeasurement
from .qcore import MINUS, ONE, PLUS, ZERO, PureState

MIN_MI_SAMPLES = 1000

ALICE_STATES = {0: ZERO, 1: PLUS}


@dataclass(frozen=True)
class EveStrategy:
    kind: str = "none"
    p: float = 0.0
    q: float = 0.0
    rounds_per_qubit: int = 1
    basis: str = "Z"

    def __post_init__(self):
        if self.kind not in ("none", "measure_reverse", "intercept_resend"):
            raise ValueError(f"unknown eavesdropper kind {self.kind!r}")
        if self.kind == "measure_reverse":
            PartialMeasurement(self.p, self.q).require_invertible()
            if int(self.rounds_per_qubit) < 1:
                raise ValueError("rounds_per_qubit must be >= 1")
        if self.kind == "intercept_resend" and self.basis not in ("Z", "X"):
            raise ValueError("intercept-resend basis must be Z or X")

    @classmethod
    def measure_reverse(cls, p: float, q: float, rounds: int = 1) -> "EveStrategy":
        return cls("measure_reverse", p, q, rounds)

    @classmethod
    def intercept_resend(cls, basis: str = "Z") -> "EveStrategy":
        return cls("intercept_resend", basis=basis)

    @classmethod
    def parse(cls, text: str) -> "EveStrategy":
        """``none``, ``measure-reverse:P,Q,ROUNDS`` or ``intercept-resend:BASIS``."""
        name, _, args = text.partition(":")
        name = name.strip().lower().replace("-", "_")
        if name == "none":
            return cls()
        if name == "measure_reverse":
            parts = [s.strip() for s in args.split(",")]
            if len(parts) not in (2, 3):
                raise ValueError("measure-reverse expects P,Q[,ROUNDS]")
            rounds = int(parts[2]) if len(parts) == 3 else 1
            return cls.measure_reverse(float(parts[0]), float(parts[1]), rounds)
        if name == "intercept_resend":
            return cls.intercept_resend((args or "Z").strip().upper())
        raise ValueError(f"unknown eavesdropper {text!r}")

    @property
    def n_draws(self) -> int:
        return {"none": 0, "measure_reverse": 2 * self.rounds_per_qubit, "intercept_resend": 1}[self.kind]

    @property
    def record_alphabet(self) -> int:
        return {"none": 1, "measure_reverse": 2**self.rounds_per_qubit, "intercept_resend": 2}[self.kind]


@dataclass(frozen=True)
class B92Config:
    n_rounds: int
    seed: int = 0
    eve: EveStrategy = EveStrategy()

    def __post_init__(self):
        if int(self.n_rounds) < 1:
            raise ValueError("n_rounds must be >= 1")


@dataclass(frozen=True)
class EveResult:
    forwarded: bool
    state: Optional[PureState]
    record: tuple


def encode_record(outcomes) -> int:
    """Bit ``k`` set when hexagon ``k`` gave mbar."""
    return sum(1 << k for k, o in enumerate(outcomes) if o is Outcome.MBAR)


def decode_record(code: int, rounds: int) -> str:
    return "".join("b" if code >> k & 1 else "m" for k in range(rounds))


def eve_measure_reverse(state: PureState, p: float, q: float, rounds: int, rng) -> EveResult:
    pm = PartialMeasurement(p, q)
    pm.require_invertible()
    record = []
    for _ in range(rounds):
        ok, o, state = run_hexagon(pm, state, rng)
        record.append(o)
        if not ok:
            return EveResult(False, None, tuple(record))
    return EveResult(True, state, tuple(record))


def _bob_minus_probability(state: PureState, a_prime: int) -> float:
    if a_prime == 0:
        return abs(state.beta) ** 2
    return abs(state.alpha - state.beta) ** 2 / 2


@dataclass(frozen=True)
class RoundRecord:
    a: int
    a_prime: int
    bob_result: int  # +1, -1, or 0 when the qubit was lost
    sifted: bool
    eve_record: Optional[int]
    qubit_lost: bool


def b92_round(a: int, a_prime: int, eve: EveStrategy, rng) -> RoundRecord:
    state = ALICE_STATES[a]
    record = None
    if eve.kind == "measure_reverse":
        res = eve_measure_reverse(state, eve.p, eve.q, eve.rounds_per_qubit, rng)
        if not res.forwarded:
            return RoundRecord(a, a_prime, 0, False, None, True)
        state, record = res.state, encode_record(res.record)
    elif eve.kind == "intercept_resend":
        basis = (ZERO, ONE) if eve.basis == "Z" else (PLUS, MINUS)
        p0 = state.fidelity(basis[0])
        record = 0 if rng.random() < p0 else 1
        state = basis[record]
    minus = rng.random() < _bob_minus_probability(state, a_prime)
    return RoundRecord(a, a_prime, -1 if minus else 1, minus, record, False)


@dataclass
class Transcript:
    """Column-oriented per-round log; ``eve_record`` is -1 where absent."""

    a: np.ndarray
    a_prime: np.ndarray
    bob_result: np.ndarray
    sifted: np.ndarray
    eve_record: np.ndarray
    qubit_lost: np.ndarray

    def __len__(self):
        return len(self.a)

    def round(self, i: int) -> RoundRecord:
        rec = int(self.eve_record[i])
        return RoundRecord(
            int(self.a[i]), int(self.a_prime[i]), int(self.bob_result[i]), bool(self.sifted[i]),
            None if rec < 0 else rec, bool(self.qubit_lost[i]),
        )


def _bit(u: np.ndarray) -> np.ndarray:
    return (u >= 0.5).astype(np.int8)


def _run_block(cfg: B92Config, start: int, stop: int):
    n = stop - start
    eve = cfg.eve
    keys = rng_mod.stream_keys(cfg.seed, np.arange(start, stop, dtype=np.uint64))
    a = _bit(rng_mod.uniforms(keys, 0))
    a_prime = _bit(rng_mod.uniforms(keys, 1))
    alpha = np.where(a == 0, ZERO.alpha, PLUS.alpha).astype(complex)
    beta = np.where(a == 0, ZERO.beta, PLUS.beta).astype(complex)
    record = np.full(n, -1, dtype=np.int64)
    lost = np.zeros(n, dtype=bool)
    if eve.kind == "measure_reverse":
        pm = PartialMeasurement(eve.p, eve.q)
        d_m, d_b = pm.diagonal(Outcome.M), pm.diagonal(Outcome.MBAR)
        record[:] = 0
        for k in range(eve.rounds_per_qubit):
            idx = np.flatnonzero(~lost)
            is_b, a1, b1 = _measure_arrays(d_m, d_b, alpha[idx], beta[idx], rng_mod.uniforms(keys[idx], 2 + 2 * k))
            is_b2, a2, b2 = _measure_arrays(d_m, d_b, b1, a1, rng_mod.uniforms(keys[idx], 3 + 2 * k))
            record[idx] |= is_b.astype(np.int64) << k
            alpha[idx], beta[idx] = b2, a2
            lost[idx[is_b2 != is_b]] = True
        record[lost] = -1
    elif eve.kind == "intercept_resend":
        u = rng_mod.uniforms(keys, 2)
        if eve.basis == "Z":
            p0 = np.abs(alpha) ** 2
            e0, e1 = ZERO, ONE
        else:
            p0 = np.abs(alpha + beta) ** 2 / 2
            e0, e1 = PLUS, MINUS
        record = np.where(u < p0, 0, 1).astype(np.int64)
        alpha = np.where(record == 0, e0.alpha, e1.alpha).astype(complex)
        beta = np.where(record == 0, e0.beta, e1.beta).astype(complex)
    u_bob = rng_mod.uniforms(keys, 2 + eve.n_draws)
    p_minus = np.where(a_prime == 0, np.abs(beta) ** 2, np.abs(alpha - beta) ** 2 / 2)
    minus = (u_bob < p_minus) & ~lost
    bob = np.where(lost, 0, np.where(minus, -1, 1)).astype(np.int8)
    return a, a_prime, bob, minus, record, lost


def run_b92(cfg: B92Config, workers: int = 1, block: int = 65536) -> tuple[Transcript, dict]:
    """Simulate ``cfg.n_rounds`` rounds and summarize.

    Stats: ``sift_rate`` (sifted / all rounds), ``error_rate`` (sifted rounds
    with ``a != 1 - a'``), ``loss_rate``, and, when Eve keeps a record on at
    least ``MIN_MI_SAMPLES`` forwarded rounds, ``eve_mutual_information_bits``
    between ``a`` and her raw record.
    """
    bounds = [(s, min(s + block, cfg.n_rounds)) for s in range(0, cfg.n_rounds, block)]
    job = lambda b: _run_block(cfg, *b)  # noqa: E731
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    t = Transcript(*(np.concatenate(x) for x in zip(*parts)))
    return t, transcript_stats(t, cfg.eve)


def run_b92_scalar(cfg: B92Config) -> list[RoundRecord]:
    """Reference loop over :func:`b92_round`, one stream per round."""
    out = []
    for i in range(cfg.n_rounds):
        s = rng_mod.Stream(cfg.seed, i)
        a = int(s.random() >= 0.5)
        a_prime = int(s.random() >= 0.5)
        out.append(b92_round(a, a_prime, cfg.eve, s))
    return out


def transcript_stats(t: Transcript, eve: EveStrategy) -> dict:
    n = len(t)
    n_sift = int(np.count_nonzero(t.sifted))
    errors = int(np.count_nonzero(t.sifted & (t.a != 1 - t.a_prime)))
    fwd = ~t.qubit_lost
    stats = {
        "rounds": n,
        "sifted": n_sift,
        "sift_rate": n_sift / n,
        "sifted_errors": errors,
        "error_rate": errors / n_sift if n_sift else math.nan,
        "lost": int(np.count_nonzero(t.qubit_lost)),
        "loss_rate": float(np.mean(t.qubit_lost)),
        "forwarded": int(np.count_nonzero(fwd)),
        "eve_mutual_information_bits": None,
    }
    if eve.kind != "none" and stats["forwarded"] >= MIN_MI_SAMPLES:
        table = contingency(t.a[fwd], t.eve_record[fwd], eve.record_alphabet)
        mi = mutual_information(table)
        stats["eve_mutual_information_bits"] = mi.value
    return stats


@dataclass(frozen=True)
class MIEstimate:
    value: float
    n_samples: int


def contingency(a: np.ndarray, record: np.ndarray, k: int) -> np.ndarray:
    table = np.zeros((2, k), dtype=np.int64)
    np.add.at(table, (np.asarray(a, dtype=np.int64), np.asarray(record, dtype=np.int64)), 1)
    return table


def mutual_information(joint_counts) -> MIEstimate:
    """Plug-in mutual information (bits) of a 2 x K contingency table."""
    table = np.asarray(joint_counts, dtype=float)
    if table.ndim != 2 or table.shape[0] != 2:
        raise ValueError("expected a 2 x K table")
    if np.any(table < 0):
        raise ValueError("counts must be non-negative")
    n = table.sum()
    if n < MIN_MI_SAMPLES:
        raise ValueError(f"need at least {MIN_MI_SAMPLES} samples, got {n:g}")
    pxy = table / n
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    value = float(np.sum(pxy[nz] * np.log2(pxy[nz] / (px * py)[nz])))
    return MIEstimate(max(value, 0.0), int(n))


# --- exact enumeration ---------------------------------------------------

@dataclass
class ExactB92:
    sift_rate: float
    error_rate: float
    loss_rate: float
    forward_probability: float
    joint_given_forwarded: dict = field(repr=False)
    leakage: float = 0.0
    transparency: float = 0.0


def _eve_branches(state: PureState, eve: EveStrategy):
    """``(probability, forwarded_state_or_None, record)`` for every Eve branch."""
    if eve.kind == "none":
        return [(1.0, state, None)]
    if eve.kind == "intercept_resend":
        basis = (ZERO, ONE) if eve.basis == "Z" else (PLUS, MINUS)
        return [(state.fidelity(e), e, r) for r, e in enumerate(basis) if state.fidelity(e) > 0]
    dist = enumerate_exact(PartialMeasurement(eve.p, eve.q), state, eve.rounds_per_qubit)
    out = []
    for key, prob in dist.probabilities.items():
        if len(key) == eve.rounds_per_qubit and all(ok for _, ok in key):
            out.append((prob, dist.states[key], encode_record([o for o, _ in key])))
        else:
            out.append((prob, None, None))
    return out


def b92_exact(eve: EveStrategy) -> ExactB92:
    """Exact protocol statistics by summing over every branch.

    ``leakage`` is ``max |P(a, r | fwd) - P(a | fwd) P(r | fwd)|`` over
    Alice's bit and Eve's record.  ``transparency`` is the largest change in
    Bob's P(-1) on a forwarded qubit relative to the undisturbed one.
    """
    p_sift = p_err = p_lost = p_fwd = 0.0
    joint: dict = {}
    transparency = 0.0
    for a in (0, 1):
        sent = ALICE_STATES[a]
        for a_prime in (0, 1):
            w = 0.25
            base = _bob_minus_probability(sent, a_prime)
            for prob, state, record in _eve_branches(sent, eve):
                if state is None:
                    p_lost += w * prob
                    continue
                p_fwd += w * prob
                pm1 = _bob_minus_probability(state, a_prime)
                if eve.kind == "measure_reverse":
                    transparency = max(transparency, abs(pm1 - base))
                p_sift += w * prob * pm1
                if a != 1 - a_prime:
                    p_err += w * prob * pm1
                if a_prime == 0:
                    # a' does not touch the qubit before Bob; count joint once
                    joint[(a, record)] = joint.get((a, record), 0.0) + 0.5 * prob
    # summed directly: 1 - p_lost cancels badly when forwarding is rare
    joint = {k: v / p_fwd for k, v in joint.items()}
    leak = 0.0
    pa = {a: sum(v for (x, _), v in joint.items() if x == a) for a in (0, 1)}
    records = {r for _, r in joint}
    pr = {r: sum(v for (_, y), v in joint.items() if y == r) for r in records}
    for a in (0, 1):
        for r in records:
            leak = max(leak, abs(joint.get((a, r), 0.0) - pa[a] * pr[r]))
    return ExactB92(p_sift, p_err / p_sift if p_sift else math.nan, p_lost, p_fwd, joint, leak, transparency)
