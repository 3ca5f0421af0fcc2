"""Chains of measure-then-reverse rounds ("hexagons") with postselection.

Each hexagon measures the qubit, then tries to undo the measurement.  A
failed reversal ends the chain.  Trials use counter-based streams keyed by
``(master_seed, trial_index)``: hexagon ``k`` consumes draws ``2k`` (the
measurement) and ``2k + 1`` (the reversal).  :func:`simulate_ensemble` runs
the same arithmetic over numpy arrays, so it reproduces :func:`run_chain`
trial for trial.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rng as rng_mod
from .gpm import (
    Outcome,
    PartialMeasurement,
    collapse,
    reversal_round,
    sample_measure,
)
from .qcore import X, PureState

MAX_ENUM_DEPTH = 6


@dataclass(frozen=True)
class ChainConfig:
    n_hexagons: int
    trials: int
    master_seed: int = 0

    def __post_init__(self):
        if int(self.n_hexagons) < 1:
            raise ValueError("n_hexagons must be >= 1")
        if int(self.trials) < 1:
            raise ValueError("trials must be >= 1")


@dataclass(frozen=True)
class TrajectoryLog:
    outcomes: tuple[Outcome, ...]
    completed: bool
    fail_index: Optional[int] = None

    def __post_init__(self):
        if self.completed and self.fail_index is not None:
            raise ValueError("a completed chain has no fail index")
        if not self.completed and self.fail_index is None:
            raise ValueError("an aborted chain needs a fail index")

    @property
    def record(self) -> str:
        """Outcome string such as ``"mmb"`` (b = mbar)."""
        return "".join(o.symbol for o in self.outcomes)


@dataclass(frozen=True)
class CountRecord:
    """Successful hexagons split by path.  Counts may be real-valued weights."""

    N_m: float
    N_mbar: float

    def __post_init__(self):
        if self.N_m < 0 or self.N_mbar < 0:
            raise ValueError("counts must be non-negative")

    @property
    def N(self) -> float:
        return self.N_m + self.N_mbar

    def count(self, o: Outcome) -> float:
        return self.N_m if o is Outcome.M else self.N_mbar


def run_hexagon(pm: PartialMeasurement, psi: PureState, rng) -> tuple[bool, Outcome, PureState]:
    pm.require_invertible()
    o, post = sample_measure(pm, psi, rng)
    success, state = reversal_round(pm, post, o, rng)
    return success, o, state


def run_chain(pm: PartialMeasurement, psi: PureState, cfg: ChainConfig, rng) -> TrajectoryLog:
    """Run up to ``cfg.n_hexagons`` hexagons, stopping at the first failed reversal.

    The outcome of the failing hexagon is kept in the log.
    """
    pm.require_invertible()
    outcomes = []
    state = psi
    for k in range(cfg.n_hexagons):
        success, o, state = run_hexagon(pm, state, rng)
        outcomes.append(o)
        if not success:
            return TrajectoryLog(tuple(outcomes), False, k)
    return TrajectoryLog(tuple(outcomes), True)


@dataclass
class EnsembleResult:
    """Outcome of :func:`simulate_ensemble`.

    ``outcomes[i, k]`` is True when hexagon ``k`` of trial ``i`` gave ``mbar``;
    entries past a failure are meaningless and masked by ``attempted``.
    """

    counts: CountRecord
    rates: dict
    outcomes: np.ndarray = field(repr=False)
    succeeded: np.ndarray = field(repr=False)
    attempted: np.ndarray = field(repr=False)
    completed: np.ndarray = field(repr=False)

    def log(self, i: int) -> TrajectoryLog:
        n = int(self.attempted[i].sum())
        outs = tuple(Outcome.MBAR if b else Outcome.M for b in self.outcomes[i, :n])
        if self.completed[i]:
            return TrajectoryLog(outs, True)
        return TrajectoryLog(outs, False, n - 1)


def _measure_arrays(d_m, d_b, alpha, beta, u):
    """Vectorized sample_measure: returns (is_mbar, alpha', beta')."""
    pa, pb = np.abs(alpha) ** 2, np.abs(beta) ** 2
    p_m = d_m[0] ** 2 * pa + d_m[1] ** 2 * pb
    is_b = ~(u < p_m)
    c0 = np.where(is_b, d_b[0], d_m[0])
    c1 = np.where(is_b, d_b[1], d_m[1])
    a2, b2 = c0 * alpha, c1 * beta
    norm = np.sqrt(np.abs(a2) ** 2 + np.abs(b2) ** 2)
    return is_b, a2 / norm, b2 / norm


def _run_block(pm: PartialMeasurement, psi: PureState, n_hex: int, seed: int, start: int, stop: int):
    n = stop - start
    keys = rng_mod.stream_keys(seed, np.arange(start, stop, dtype=np.uint64))
    d_m, d_b = pm.diagonal(Outcome.M), pm.diagonal(Outcome.MBAR)
    alpha = np.full(n, psi.alpha, dtype=complex)
    beta = np.full(n, psi.beta, dtype=complex)
    outcomes = np.zeros((n, n_hex), dtype=bool)
    succeeded = np.zeros((n, n_hex), dtype=bool)
    attempted = np.zeros((n, n_hex), dtype=bool)
    alive = np.ones(n, dtype=bool)
    for k in range(n_hex):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        attempted[idx, k] = True
        u1 = rng_mod.uniforms(keys[idx], 2 * k)
        is_b, a1, b1 = _measure_arrays(d_m, d_b, alpha[idx], beta[idx], u1)
        # X, measure again, X
        u2 = rng_mod.uniforms(keys[idx], 2 * k + 1)
        is_b2, a2, b2 = _measure_arrays(d_m, d_b, b1, a1, u2)
        ok = is_b2 == is_b
        outcomes[idx, k] = is_b
        succeeded[idx, k] = ok
        alpha[idx], beta[idx] = b2, a2
        alive[idx[~ok]] = False
    return outcomes, succeeded, attempted, alive


def simulate_ensemble(
    pm: PartialMeasurement, psi: PureState, cfg: ChainConfig, workers: int = 1, block: int = 65536
) -> EnsembleResult:
    """Run ``cfg.trials`` independent chains and aggregate postselected counts.

    ``counts`` covers hexagons of completed chains only.  ``rates`` holds
    per-hexagon path frequencies over all attempted hexagons, the chain
    completion rate, and the postselected m-path fraction.  Results do not
    depend on ``workers`` or ``block``.
    """
    pm.require_invertible()
    bounds = [(s, min(s + block, cfg.trials)) for s in range(0, cfg.trials, block)]
    job = lambda b: _run_block(pm, psi, cfg.n_hexagons, cfg.master_seed, *b)  # noqa: E731
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    outcomes, succeeded, attempted, completed = (np.concatenate(x) for x in zip(*parts))

    done = completed[:, None] & attempted
    n_m = int(np.count_nonzero(done & ~outcomes))
    n_b = int(np.count_nonzero(done & outcomes))
    n_att = int(np.count_nonzero(attempted))
    via_m = int(np.count_nonzero(attempted & succeeded & ~outcomes))
    via_b = int(np.count_nonzero(attempted & succeeded & outcomes))
    n_completed = int(np.count_nonzero(completed))
    rates = {
        "hexagons_attempted": n_att,
        "success_rate_m_path": via_m / n_att,
        "success_rate_mbar_path": via_b / n_att,
        "success_rate": (via_m + via_b) / n_att,
        "completed_chains": n_completed,
        "completion_rate": n_completed / cfg.trials,
        "postselected_m_fraction": n_m / (n_m + n_b) if n_m + n_b else math.nan,
        "successful_hexagons": via_m + via_b,
        "postselected_m_fraction_all_successes": via_m / (via_m + via_b) if via_m + via_b else math.nan,
    }
    return EnsembleResult(CountRecord(n_m, n_b), rates, outcomes, succeeded, attempted, completed)


def run_chains(pm: PartialMeasurement, psi: PureState, cfg: ChainConfig) -> list[TrajectoryLog]:
    """Scalar reference loop over trials, one :class:`~reversim.rng.Stream` per trial."""
    return [run_chain(pm, psi, cfg, rng_mod.Stream(cfg.master_seed, i)) for i in range(cfg.trials)]


# --- exact enumeration ---------------------------------------------------

Step = tuple  # (Outcome, success: bool)


@dataclass
class PathDistribution:
    """Exact probabilities of every distinguishable chain history.

    Keys are tuples of ``(Outcome, success)`` per hexagon, ending either at
    ``depth`` successes or at the first failure.  ``states`` holds the
    qubit's state at the end of each history.
    """

    depth: int
    probabilities: dict
    states: dict = field(repr=False)

    def total(self) -> float:
        return math.fsum(self.probabilities.values())

    def completed(self) -> dict:
        return {k: v for k, v in self.probabilities.items() if len(k) == self.depth and all(s for _, s in k)}

    def completion_probability(self) -> float:
        return math.fsum(self.completed().values())

    def completion_via(self, outcomes) -> float:
        """Probability of completing with exactly this outcome sequence."""
        key = tuple((o, True) for o in outcomes)
        return self.probabilities.get(key, 0.0)

    def record_distribution(self) -> dict:
        """Completed outcome strings mapped to their (unnormalized) probabilities."""
        return {"".join(o.symbol for o, _ in k): v for k, v in self.completed().items()}


def enumerate_exact(pm: PartialMeasurement, psi: PureState, depth: int) -> PathDistribution:
    """Multiply exact branch probabilities down every measurement/reversal branch.

    Branch weights come from Born norms of the Kraus operators applied to the
    running state, not from closed forms.
    """
    if not 1 <= depth <= MAX_ENUM_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_ENUM_DEPTH}]")
    pm.require_invertible()
    probs, states = {}, {}

    def walk(prefix, weight, state):
        if len(prefix) == depth:
            probs[prefix], states[prefix] = weight, state
            return
        for o in Outcome:
            try:
                post, p1 = collapse(pm, state, o)
            except ValueError:
                continue
            flipped = PureState.from_vector(X @ post.vector)
            for o2 in Outcome:
                try:
                    after, p2 = collapse(pm, flipped, o2)
                except ValueError:
                    continue
                final = PureState.from_vector(X @ after.vector)
                key = prefix + ((o, o2 is o),)
                if o2 is o:
                    walk(key, weight * p1 * p2, final)
                else:
                    probs[key], states[key] = weight * p1 * p2, final

    walk((), 1.0, psi)
    return PathDistribution(depth, probs, states)


def all_histories(depth: int):
    """Every ``(Outcome, success)`` pattern of length ``depth`` (4**depth of them)."""
    return itertools.product(itertools.product(Outcome, (True, False)), repeat=depth)
