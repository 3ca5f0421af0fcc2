import math

import numpy as np
import pytest

from reversim.qkd import (
    B92Config,
    EveStrategy,
    b92_exact,
    b92_round,
    contingency,
    decode_record,
    encode_record,
    eve_measure_reverse,
    mutual_information,
    run_b92,
    run_b92_scalar,
    transcript_stats,
)
from reversim.gpm import NotInvertibleError, Outcome
from reversim.qcore import PLUS, ZERO
from reversim.rng import Stream

NONE = EveStrategy()
MR = EveStrategy.measure_reverse(0.3, 0.4, 2)


def test_round_examples():
    for i in range(200):
        r = b92_round(0, 0, NONE, Stream(1, i))
        assert r.bob_result == 1 and not r.sifted and not r.qubit_lost
    hits = {k: 0 for k in ((1, 0), (0, 1), (1, 1))}
    n = 20_000
    for (a, ap) in hits:
        hits[(a, ap)] = sum(b92_round(a, ap, NONE, Stream(2, i)).sifted for i in range(n))
    assert abs(hits[(1, 0)] / n - 0.5) < 0.015
    assert abs(hits[(0, 1)] / n - 0.5) < 0.015
    assert hits[(1, 1)] == 0


def test_no_eve_protocol():
    t, stats = run_b92(B92Config(100_000, 3))
    assert abs(stats["sift_rate"] - 0.25) < 0.005
    assert stats["sifted_errors"] == 0
    assert np.all(t.a[t.sifted] == 1 - t.a_prime[t.sifted])
    assert stats["lost"] == 0 and stats["eve_mutual_information_bits"] is None


def test_measure_reverse_loses_and_stays_clean():
    t, stats = run_b92(B92Config(100_000, 4, MR))
    assert abs(stats["loss_rate"] - (1 - 0.54**2)) < 0.005
    assert stats["sifted_errors"] == 0
    assert np.all(t.bob_result[t.qubit_lost] == 0)
    assert not np.any(t.sifted & t.qubit_lost)
    # conditioned on forwarding, sifting matches the undisturbed protocol
    fwd = ~t.qubit_lost
    assert abs(np.mean(t.sifted[fwd]) - 0.25) < 0.01


@pytest.mark.parametrize("state", [ZERO, PLUS], ids=["zero", "plus"])
def test_eve_forwarding_probability(state):
    n = 20_000
    fwd = sum(eve_measure_reverse(state, 0.3, 0.4, 1, Stream(5, i)).forwarded for i in range(n))
    assert abs(fwd / n - 0.54) < 0.015
    res = next(
        r for r in (eve_measure_reverse(state, 0.3, 0.4, 2, Stream(6, i)) for i in range(100)) if r.forwarded
    )
    assert res.state.fidelity(state) == pytest.approx(1, abs=1e-12)
    with pytest.raises(NotInvertibleError):
        eve_measure_reverse(state, 0.0, 0.4, 1, Stream(0))


def test_record_encoding():
    M, B = Outcome.M, Outcome.MBAR
    assert encode_record([M, B, B]) == 0b110
    assert decode_record(0b110, 3) == "mbb"
    assert decode_record(encode_record([B, M]), 2) == "bm"


def test_mutual_information_examples():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 100_000)
    r = rng.integers(0, 2, 100_000)
    assert mutual_information(contingency(a, r, 2)).value < 2e-3
    assert mutual_information([[500, 0], [0, 500]]).value == pytest.approx(1.0, abs=1e-12)
    est = mutual_information([[250, 250], [250, 250]])
    assert est.value == 0.0 and est.n_samples == 1000
    with pytest.raises(ValueError):
        mutual_information([[10, 10], [10, 10]])
    with pytest.raises(ValueError):
        mutual_information([[1000, 0, 0]])


def test_contingency_layout():
    t = contingency(np.array([0, 1, 1, 0]), np.array([3, 0, 3, 3]), 4)
    np.testing.assert_array_equal(t, [[0, 0, 0, 2], [1, 0, 0, 1]])


@pytest.mark.parametrize(
    "eve",
    [NONE, MR, EveStrategy.measure_reverse(0.9, 0.05, 1), EveStrategy.intercept_resend("Z"), EveStrategy.intercept_resend("X")],
    ids=["none", "mr2", "mr1", "ir-z", "ir-x"],
)
def test_vectorized_matches_scalar(eve):
    cfg = B92Config(2000, 11, eve)
    t, _ = run_b92(cfg, block=300)
    scalar = run_b92_scalar(cfg)
    assert [t.round(i) for i in range(cfg.n_rounds)] == scalar


def test_run_deterministic_across_workers():
    cfg = B92Config(50_000, 12, MR)
    a, sa = run_b92(cfg)
    b, sb = run_b92(cfg, workers=3, block=7000)
    assert sa == sb
    np.testing.assert_array_equal(a.eve_record, b.eve_record)


@pytest.mark.parametrize("pq", [(0.2, 0.3), (0.3, 0.4), (0.5, 0.5), (0.9, 0.05), (0.01, 0.99)])
@pytest.mark.parametrize("rounds", [1, 2, 3])
def test_exact_zero_leakage(pq, rounds):
    ex = b92_exact(EveStrategy.measure_reverse(*pq, rounds))
    assert ex.leakage < 1e-12
    assert ex.transparency < 1e-12
    assert ex.error_rate < 1e-12
    assert ex.forward_probability == pytest.approx(((1 - pq[0]) * (1 - pq[1]) + pq[0] * pq[1]) ** rounds, abs=1e-12)
    # forwarded rounds sift at the undisturbed rate
    assert ex.sift_rate / ex.forward_probability == pytest.approx(0.25, abs=1e-12)
    assert sum(ex.joint_given_forwarded.values()) == pytest.approx(1, abs=1e-12)


def test_exact_no_eve():
    ex = b92_exact(NONE)
    assert ex.sift_rate == pytest.approx(0.25, abs=1e-15)
    assert ex.error_rate == 0 and ex.loss_rate == 0


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_intercept_resend_detectable(basis):
    ex = b92_exact(EveStrategy.intercept_resend(basis))
    assert ex.error_rate > 0
    assert ex.leakage > 0.05
    _, stats = run_b92(B92Config(100_000, 13, EveStrategy.intercept_resend(basis)))
    assert stats["sifted_errors"] > 0
    assert abs(stats["error_rate"] - ex.error_rate) < 0.01
    assert stats["eve_mutual_information_bits"] > 0.05


def test_empirical_mi_measure_reverse():
    # margin so at least 10^5 rounds survive
    n = math.ceil(102_000 / 0.54**2)
    _, stats = run_b92(B92Config(n, 14, MR))
    assert stats["forwarded"] >= 100_000
    assert stats["eve_mutual_information_bits"] < 2e-3


def test_stats_small_run_skips_mi():
    t, stats = run_b92(B92Config(100, 1, MR))
    assert stats["eve_mutual_information_bits"] is None
    assert transcript_stats(t, MR) == stats


@pytest.mark.parametrize(
    "text, expected",
    [
        ("none", NONE),
        ("measure-reverse:0.3,0.4,2", MR),
        ("measure-reverse:0.3,0.4", EveStrategy.measure_reverse(0.3, 0.4, 1)),
        ("intercept-resend:x", EveStrategy.intercept_resend("X")),
        ("intercept-resend", EveStrategy.intercept_resend("Z")),
    ],
)
def test_parse(text, expected):
    assert EveStrategy.parse(text) == expected


@pytest.mark.parametrize("text", ["sniff", "measure-reverse:0.3", "measure-reverse:0,0.4", "intercept-resend:Y"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        EveStrategy.parse(text)


def test_config_validation():
    with pytest.raises(ValueError):
        B92Config(0)
    with pytest.raises(ValueError):
        EveStrategy("listen")
    assert MR.record_alphabet == 4 and MR.n_draws == 4
