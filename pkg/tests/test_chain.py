import math

import numpy as np
import pytest

from reversim.chain import (
    ChainConfig,
    CountRecord,
    TrajectoryLog,
    all_histories,
    enumerate_exact,
    run_chain,
    run_chains,
    run_hexagon,
    simulate_ensemble,
)
from reversim.gpm import NotInvertibleError, Outcome, PartialMeasurement
from reversim.qcore import PLUS, ZERO, BlochAngles, state_from_angles
from reversim.rng import Stream

M, B = Outcome.M, Outcome.MBAR
PM = PartialMeasurement(0.2, 0.3)
GENERIC = state_from_angles(BlochAngles(1.0, 2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(0, 10)
    with pytest.raises(ValueError):
        ChainConfig(1, 0)


def test_log_invariants():
    with pytest.raises(ValueError):
        TrajectoryLog((M,), True, 0)
    with pytest.raises(ValueError):
        TrajectoryLog((M,), False)
    assert TrajectoryLog((M, B, M), True).record == "mbm"


def test_count_record():
    c = CountRecord(5, 2)
    assert c.N == 7 and c.count(B) == 2
    with pytest.raises(ValueError):
        CountRecord(-1, 0)


def test_run_hexagon_rejects_non_invertible():
    with pytest.raises(NotInvertibleError):
        run_hexagon(PartialMeasurement(0.0, 0.3), ZERO, Stream(0))


def test_hexagon_path_frequencies():
    n = 100_000
    res = simulate_ensemble(PM, PLUS, ChainConfig(1, n, 17))
    assert abs(res.rates["success_rate_m_path"] - 0.56) < 0.005
    assert abs(res.rates["success_rate_mbar_path"] - 0.06) < 0.005
    half = PartialMeasurement(0.5, 0.5)
    for psi in (ZERO, PLUS, GENERIC):
        r = simulate_ensemble(half, psi, ChainConfig(1, n, 5)).rates
        assert abs(r["success_rate"] - 0.5) < 0.005


def test_run_chain_contract():
    cfg = ChainConfig(3, 1, 0)
    seen_complete = seen_fail0 = False
    for i in range(200):
        log = run_chain(PM, PLUS, cfg, Stream(4, i))
        if log.completed:
            seen_complete = True
            assert len(log.outcomes) == 3 and log.fail_index is None
        else:
            assert len(log.outcomes) == log.fail_index + 1
            seen_fail0 |= log.fail_index == 0
    assert seen_complete and seen_fail0


def test_completion_rate_two_hexagons():
    r = simulate_ensemble(PartialMeasurement(0.5, 0.5), GENERIC, ChainConfig(2, 100_000, 8)).rates
    assert abs(r["completion_rate"] - 0.25) < 0.005


@pytest.mark.parametrize("psi", [ZERO, PLUS, GENERIC], ids=["zero", "plus", "generic"])
def test_postselected_fraction(psi):
    # ~10^5 postselected hexagons per run
    r = simulate_ensemble(PM, psi, ChainConfig(1, math.ceil(1e5 / 0.62), 21)).rates
    assert abs(r["postselected_m_fraction"] - 0.56 / 0.62) < 0.005
    h = simulate_ensemble(PartialMeasurement(0.5, 0.5), psi, ChainConfig(1, 200_000, 22)).rates
    assert abs(h["postselected_m_fraction"] - 0.5) < 0.005


@pytest.mark.parametrize("n_hex", [1, 3])
def test_ensemble_matches_scalar_loop(n_hex):
    cfg = ChainConfig(n_hex, 400, 99)
    res = simulate_ensemble(PM, GENERIC, cfg)
    scalar = run_chains(PM, GENERIC, cfg)
    assert [res.log(i) for i in range(cfg.trials)] == scalar


def test_ensemble_deterministic_across_workers_and_blocks():
    cfg = ChainConfig(4, 20_000, 123)
    a = simulate_ensemble(PM, GENERIC, cfg)
    b = simulate_ensemble(PM, GENERIC, cfg, workers=4, block=1000)
    assert a.counts == b.counts and a.rates == b.rates
    np.testing.assert_array_equal(a.outcomes & a.attempted, b.outcomes & b.attempted)


def test_ensemble_prefix_stable():
    # counter-based streams: adding trials never changes earlier ones
    small = simulate_ensemble(PM, PLUS, ChainConfig(2, 100, 3))
    big = simulate_ensemble(PM, PLUS, ChainConfig(2, 5000, 3))
    assert [small.log(i) for i in range(100)] == [big.log(i) for i in range(100)]


# --- exact oracle ---------------------------------------------------------


def test_enumerate_depth_one():
    d = enumerate_exact(PM, PLUS, 1)
    assert d.total() == pytest.approx(1, abs=1e-12)
    assert len(d.probabilities) == 4
    assert d.completion_via([M]) == pytest.approx(0.56, abs=1e-12)
    assert d.completion_via([B]) == pytest.approx(0.06, abs=1e-12)


def test_enumerate_depth_two():
    d = enumerate_exact(PM, GENERIC, 2)
    assert d.completion_probability() == pytest.approx(0.3844, abs=1e-12)


def test_enumerate_depth_limit():
    with pytest.raises(ValueError):
        enumerate_exact(PM, PLUS, 7)
    with pytest.raises(ValueError):
        enumerate_exact(PM, PLUS, 0)


def test_enumerate_keys_are_histories():
    d = enumerate_exact(PM, GENERIC, 3)
    assert d.total() == pytest.approx(1, abs=1e-12)
    full = set(all_histories(3))
    for key in d.probabilities:
        assert any(h[: len(key)] == key for h in full)
        assert all(ok for _, ok in key[:-1])


@pytest.mark.parametrize("p, q", [(0.2, 0.3), (0.9, 0.05), (0.5, 0.5)])
def test_enumeration_state_independent(p, q):
    pm = PartialMeasurement(p, q)
    ref = None
    for t in np.linspace(0, math.pi, 10):
        for f in np.linspace(0, 2 * math.pi, 10, endpoint=False):
            d = enumerate_exact(pm, state_from_angles(BlochAngles(t, f)), 3)
            rec = d.record_distribution()
            if ref is None:
                ref = rec
            assert set(rec) == set(ref)
            for k in rec:
                assert abs(rec[k] - ref[k]) < 1e-12


def test_enumeration_completed_states_restore_input():
    d = enumerate_exact(PM, GENERIC, 4)
    for key in d.completed():
        assert d.states[key].fidelity(GENERIC) == pytest.approx(1, abs=1e-12)


def test_memorylessness():
    d = enumerate_exact(PM, GENERIC, 4)
    single = enumerate_exact(PM, GENERIC, 1)
    single_frac = single.completion_via([M]) / single.completion_probability()
    for k in range(1, 4):
        # P(hexagon k via m | hexagons 0..k completed)
        num = den = 0.0
        for key, prob in d.probabilities.items():
            if len(key) > k and all(ok for _, ok in key[: k + 1]):
                den += prob
                if key[k][0] is M:
                    num += prob
        assert abs(num / den - single_frac) < 1e-12


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_monte_carlo_matches_oracle(depth):
    n = 100_000
    d = enumerate_exact(PM, GENERIC, depth)
    res = simulate_ensemble(PM, GENERIC, ChainConfig(depth, n, 1000 + depth))
    counts = {}
    for i in range(n):
        key = tuple(
            (B if res.outcomes[i, k] else M, bool(res.succeeded[i, k])) for k in range(depth) if res.attempted[i, k]
        )
        counts[key] = counts.get(key, 0) + 1
    assert set(counts) <= set(d.probabilities)
    for key, prob in d.probabilities.items():
        sd = math.sqrt(prob * (1 - prob) / n)
        assert abs(counts.get(key, 0) / n - prob) <= 3 * sd + 1e-12, key
