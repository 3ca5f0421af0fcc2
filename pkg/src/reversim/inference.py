"""Likelihood, MAP, Fisher information and entropy for postselected chains.

The weighted likelihood of a postselected record with ``N_m`` successes via
the m path and ``N_mbar`` via the mbar path is

    L = [P_m P(m|m)]^N_m [P_mbar P(mbar|mbar)]^N_mbar

which telescopes to ``[(1-p)(1-q)]^N_m (pq)^N_mbar``: the state drops out.
Dropping the reversal factors leaves ``P_m^N_m P_mbar^N_mbar``, which does
depend on the state but is fed with counts that do not.

All probabilities here are computed by applying Kraus operators to the
state (see :func:`path_probabilities`), never by the telescoped closed form,
so the cancellation is checked rather than assumed.  Entropies are in nats.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import mpmath
import numpy as np

from .chain import ChainConfig, CountRecord, simulate_ensemble
from .gpm import Outcome, PartialMeasurement, conditional_success, outcome_probabilities
from .qcore import BlochAngles, PureState, state_from_angles
from . import rng as rng_mod

DEFAULT_STEP = 1e-4
RICHARDSON_TOL = 1e-4
MAP_TIE_TOL = 1e-9
_MP_DPS = 50


class UnreliableHessianWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LikelihoodSpec:
    include_reversal_factors: bool = True


def path_probabilities(p, q, theta, phi, lib=np):
    """``(P_m, P_mbar, P(m|m), P(mbar|mbar))`` at Bloch angles ``(theta, phi)``.

    ``lib`` supplies ``sqrt/cos/sin/exp`` and may be numpy (array angles) or
    mpmath (scalar, arbitrary precision).
    """
    alpha = lib.cos(theta / 2)
    beta = lib.exp(1j * phi) * lib.sin(theta / 2)
    out = []
    for c0, c1 in ((lib.sqrt(1 - q), lib.sqrt(1 - p)), (lib.sqrt(q), lib.sqrt(p))):
        a1, b1 = c0 * alpha, c1 * beta
        prob = abs(a1) ** 2 + abs(b1) ** 2
        norm = lib.sqrt(prob)
        # X swaps amplitudes, then the same Kraus operator acts again
        a2, b2 = c0 * (b1 / norm), c1 * (a1 / norm)
        out.append((prob, abs(a2) ** 2 + abs(b2) ** 2))
    (p_m, p_mm), (p_b, p_bb) = out
    return p_m, p_b, p_mm, p_bb


def joint_path_probabilities(p, q, theta, phi, lib=np):
    """``(P_m P(m|m), P_mbar P(mbar|mbar))`` as ``<psi|G|psi>`` with ``G = (M X M)^dag (M X M)``.

    ``G`` is diagonal, so on a normalized state the expectation is the convex
    combination ``G11 + (G00 - G11) |alpha|^2``; ``phi`` drops out.
    """
    w0 = lib.cos(theta / 2) ** 2
    out = []
    for c0, c1 in ((lib.sqrt(1 - q), lib.sqrt(1 - p)), (lib.sqrt(q), lib.sqrt(p))):
        # M X M = [[0, c0 c1], [c1 c0, 0]]
        g00, g11 = (c1 * c0) ** 2, (c0 * c1) ** 2
        out.append(g11 + (g00 - g11) * w0)
    return tuple(out)


def _log_terms(pm, counts, theta, phi, spec, lib):
    if spec.include_reversal_factors:
        # skipping the intermediate renormalization keeps the cancellation exact
        j_m, j_b = joint_path_probabilities(pm.p, pm.q, theta, phi, lib)
        return ((counts.N_m, j_m), (counts.N_mbar, j_b))
    p_m, p_b, _, _ = path_probabilities(pm.p, pm.q, theta, phi, lib)
    return ((counts.N_m, p_m), (counts.N_mbar, p_b))


def log_weighted_likelihood(pm: PartialMeasurement, counts: CountRecord, angles: BlochAngles, spec=LikelihoodSpec()) -> float:
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = _log_terms(pm, counts, angles.theta, angles.phi, spec, np)
    for n, prob in terms:
        if n == 0:
            continue
        if not prob > 0.0:
            return -math.inf
        total += n * math.log(prob)
    return total


def weighted_likelihood(pm: PartialMeasurement, counts: CountRecord, angles: BlochAngles, spec=LikelihoodSpec()) -> float:
    return math.exp(log_weighted_likelihood(pm, counts, angles, spec))


def angle_grid(n_theta: int, n_phi: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``n_theta`` points on [0, pi] (ends included) and ``n_phi`` on [0, 2pi)."""
    n_phi = n_theta if n_phi is None else n_phi
    if n_theta < 1 or n_phi < 1:
        raise ValueError("grid needs at least one point per axis")
    thetas = np.linspace(0.0, math.pi, n_theta) if n_theta > 1 else np.array([math.pi / 2])
    phis = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
    return thetas, phis


@dataclass
class LikelihoodSurface:
    theta_grid: np.ndarray
    phi_grid: np.ndarray
    log_values: np.ndarray

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.log_values)

    @property
    def flatness(self) -> float:
        v = self.log_values[self.finite]
        return float(v.max() - v.min()) if v.size else math.nan

    @property
    def phi_flatness(self) -> float:
        """Largest spread along phi within any theta row."""
        spreads = [
            np.ptp(row[np.isfinite(row)]) for row in self.log_values if np.isfinite(row).any()
        ]
        return float(max(spreads)) if spreads else math.nan


def log_likelihood_surface(pm, counts, theta_grid, phi_grid, spec=LikelihoodSpec()) -> LikelihoodSurface:
    thetas = np.asarray(theta_grid, dtype=float)
    phis = np.asarray(phi_grid, dtype=float)
    for g in (thetas, phis):
        if g.ndim != 1 or g.size < 1 or np.any(np.diff(g) <= 0):
            raise ValueError("grids must be non-empty and strictly increasing")
    T, P = np.meshgrid(thetas, phis, indexing="ij")
    values = np.zeros(T.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        for n, prob in _log_terms(pm, counts, T, P, spec, np):
            if n:
                values = values + n * np.log(prob)
    values = np.where(np.isnan(values), -np.inf, values)
    return LikelihoodSurface(thetas, phis, values)


class MapEstimate(NamedTuple):
    cells: frozenset
    degenerate: bool


def map_estimate(surface: LikelihoodSurface, tie_tolerance: float = MAP_TIE_TOL) -> MapEstimate:
    """Every grid cell within ``tie_tolerance`` of the maximum log-likelihood.

    ``degenerate`` flags argmax sets covering more than half of a multi-cell grid.
    """
    v = surface.log_values
    if not np.isfinite(v).any():
        raise ValueError("surface has no finite entries")
    best = v[np.isfinite(v)].max()
    hits = np.argwhere(v >= best - tie_tolerance)
    cells = frozenset((int(i), int(j)) for i, j in hits)
    return MapEstimate(cells, v.size > 1 and len(cells) > 0.5 * v.size)


def theta_estimate(surface: LikelihoodSurface, est: MapEstimate) -> float:
    """Mean polar angle over the argmax set."""
    return float(np.mean([surface.theta_grid[i] for i, _ in est.cells]))


def _mp_log_likelihood(pm, counts, theta, phi, spec):
    total = mpmath.mpf(0)
    for n, prob in _log_terms(pm, counts, theta, phi, spec, mpmath):
        if n == 0:
            continue
        if prob <= 0:
            raise ValueError("log-likelihood is -inf at this point")
        total += n * mpmath.log(prob)
    return total


def _mp_neg_hessian(pm, counts, theta, phi, spec, h):
    f = lambda dt, dp: _mp_log_likelihood(pm, counts, theta + dt, phi + dp, spec)  # noqa: E731
    f0 = f(0, 0)
    h_tt = (f(h, 0) - 2 * f0 + f(-h, 0)) / h**2
    h_pp = (f(0, h) - 2 * f0 + f(0, -h)) / h**2
    h_tp = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h**2)
    return -np.array([[float(h_tt), float(h_tp)], [float(h_tp), float(h_pp)]])


def fisher_information(pm, counts, angles: BlochAngles, spec=LikelihoodSpec(), step: float = DEFAULT_STEP) -> np.ndarray:
    """Observed Fisher matrix in ``(theta, phi)``: minus the central-difference Hessian.

    The stencil is evaluated in 50-digit arithmetic so the 1/step**2
    amplification of rounding noise stays far below any meaningful entry.
    A repeat at ``step / 2`` disagreeing by more than ``RICHARDSON_TOL``
    (relative to max(1, |F|)) emits :class:`UnreliableHessianWarning`.
    """
    if not (step < angles.theta < math.pi - step):
        raise ValueError("theta must be interior to (0, pi) by more than one step")
    with mpmath.workdps(_MP_DPS):
        theta, phi, h = mpmath.mpf(angles.theta), mpmath.mpf(angles.phi), mpmath.mpf(step)
        coarse = _mp_neg_hessian(pm, counts, theta, phi, spec, h)
        fine = _mp_neg_hessian(pm, counts, theta, phi, spec, h / 2)
    scale = max(1.0, float(np.max(np.abs(coarse))))
    if np.max(np.abs(coarse - fine)) / scale > RICHARDSON_TOL:
        warnings.warn("finite-difference Hessian did not converge between step and step/2", UnreliableHessianWarning, stacklevel=2)
    return coarse


@dataclass(frozen=True)
class EntropyReport:
    S_meas: float
    S_rev: float
    closed_form: float

    @property
    def S_total(self) -> float:
        return self.S_meas + self.S_rev


def _nlog(n, prob):
    if n == 0:
        return 0.0
    if prob <= 0.0:
        raise ValueError("zero-probability event with a nonzero count")
    return -n * math.log(prob)


def entropy_report(pm: PartialMeasurement, psi: PureState, counts: CountRecord) -> EntropyReport:
    """Split ``-ln L`` into a measurement part and a reversal part.

    ``closed_form`` is the state-free total ``-N_m ln[(1-p)(1-q)] - N_mbar ln(pq)``.
    """
    p_m, p_b = outcome_probabilities(pm, psi)
    s_meas = _nlog(counts.N_m, p_m) + _nlog(counts.N_mbar, p_b)
    s_rev = 0.0
    for o in Outcome:
        n = counts.count(o)
        if n:
            s_rev += _nlog(n, conditional_success(pm, o, psi))
    closed = _nlog(counts.N_m, pm.path_probability(Outcome.M)) + _nlog(counts.N_mbar, pm.path_probability(Outcome.MBAR))
    return EntropyReport(s_meas, s_rev, closed)


def asymptotic_entropy(p, q):
    """Per-hexagon entropy ``-pq ln pq - (1-p)(1-q) ln[(1-p)(1-q)]``; arrays allowed."""
    x = np.asarray(p) * np.asarray(q)
    y = (1 - np.asarray(p)) * (1 - np.asarray(q))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -np.where(x > 0, x * np.log(x), 0.0) - np.where(y > 0, y * np.log(y), 0.0)
    return s


def asymptotic_entropy_scan(p_grid, q_grid) -> tuple[float, float, float]:
    """Grid argmax of :func:`asymptotic_entropy`; returns ``(p, q, S)``."""
    p_grid, q_grid = np.asarray(p_grid, float), np.asarray(q_grid, float)
    if np.any((p_grid <= 0) | (p_grid >= 1)) or np.any((q_grid <= 0) | (q_grid >= 1)):
        raise ValueError("scan grid must lie inside (0, 1)")
    S = asymptotic_entropy(*np.meshgrid(p_grid, q_grid, indexing="ij"))
    i, j = np.unravel_index(np.argmax(S), S.shape)
    return float(p_grid[i]), float(q_grid[j]), float(S[i, j])


def interior_grid(n: int) -> np.ndarray:
    """``n`` evenly spaced points strictly inside (0, 1); odd ``n`` hits 0.5."""
    return np.linspace(0.0, 1.0, n + 2)[1:-1]


def naive_map_thetas(
    pm: PartialMeasurement,
    theta_true: float,
    n_ensembles: int,
    cfg: ChainConfig,
    grid: int = 50,
    phi_true: float = 0.0,
) -> np.ndarray:
    """MAP polar angles from the reversal-free likelihood, one per simulated ensemble.

    Ensemble ``j`` runs with master seed ``derive_seed(cfg.master_seed, j)``.
    """
    psi = state_from_angles(BlochAngles(theta_true, phi_true))
    thetas, phis = angle_grid(grid)
    off = LikelihoodSpec(include_reversal_factors=False)
    out = np.empty(n_ensembles)
    for j in range(n_ensembles):
        sub = ChainConfig(cfg.n_hexagons, cfg.trials, rng_mod.derive_seed(cfg.master_seed, j))
        counts = simulate_ensemble(pm, psi, sub).counts
        surface = log_likelihood_surface(pm, counts, thetas, phis, off)
        out[j] = theta_estimate(surface, map_estimate(surface))
    return out
