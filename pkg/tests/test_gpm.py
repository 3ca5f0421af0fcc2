import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reversim.gpm import (
    DegenerateCollapseError,
    KOutcomeMeasurement,
    NotInvertibleError,
    Outcome,
    PartialMeasurement,
    collapse,
    completeness_error,
    conditional_success,
    effects,
    inverse_kraus,
    is_identity,
    k_outcome_inverse,
    k_outcome_operators,
    k_outcome_probabilities,
    kraus_pair,
    outcome_probabilities,
    reversal_round,
    sample_measure,
)
from reversim.qcore import ONE, PLUS, ZERO, BlochAngles, PureState, state_from_angles
from reversim.rng import Stream

M, B = Outcome.M, Outcome.MBAR
strengths = st.floats(0.0, 1.0)
open_strengths = st.floats(1e-3, 1 - 1e-3)
thetas = st.floats(0.0, math.pi)
phis = st.floats(0.0, 2 * math.pi, exclude_max=True)
GRID = [state_from_angles(BlochAngles(t, f)) for t in np.linspace(0, math.pi, 7) for f in np.linspace(0, 6, 5)]


def test_kraus_examples():
    m, b = kraus_pair(PartialMeasurement(0, 0))
    np.testing.assert_array_equal(m, np.eye(2))
    np.testing.assert_array_equal(b, np.zeros((2, 2)))
    m, b = kraus_pair(PartialMeasurement(0.5, 0.5))
    np.testing.assert_allclose(m, np.eye(2) / math.sqrt(2), atol=1e-15)
    np.testing.assert_allclose(b, np.eye(2) / math.sqrt(2), atol=1e-15)
    m, b = kraus_pair(PartialMeasurement(0.2, 0.3))
    np.testing.assert_allclose(np.diag(m), [math.sqrt(0.7), math.sqrt(0.8)], atol=1e-15)
    np.testing.assert_allclose(np.diag(b), [math.sqrt(0.3), math.sqrt(0.2)], atol=1e-15)


@pytest.mark.parametrize("p, q", [(-0.1, 0.5), (0.5, 1.01), (math.nan, 0.2)])
def test_invalid_strengths(p, q):
    with pytest.raises(ValueError):
        PartialMeasurement(p, q)


@given(strengths, strengths)
def test_completeness(p, q):
    e_m, e_b = effects(PartialMeasurement(p, q))
    assert is_identity(e_m + e_b)


def test_outcome_probability_examples():
    pm = PartialMeasurement(0.2, 0.3)
    for psi in (ZERO, PLUS, state_from_angles(BlochAngles(1.0, 2.0))):
        assert outcome_probabilities(PartialMeasurement(0.5, 0.5), psi) == pytest.approx((0.5, 0.5), abs=1e-12)
    assert outcome_probabilities(pm, PLUS) == pytest.approx((0.75, 0.25), abs=1e-12)
    assert outcome_probabilities(pm, ZERO) == pytest.approx((0.7, 0.3), abs=1e-12)


@given(strengths, strengths, thetas, phis)
def test_probabilities_sum_to_one(p, q, theta, phi):
    pm_, pb = outcome_probabilities(PartialMeasurement(p, q), state_from_angles(BlochAngles(theta, phi)))
    assert abs(pm_ + pb - 1) < 1e-12


def test_collapse_examples():
    pm = PartialMeasurement(0.2, 0.3)
    post, prob = collapse(pm, ZERO, M)
    assert post.fidelity(ZERO) == pytest.approx(1, abs=1e-15) and prob == pytest.approx(0.7, abs=1e-15)
    post, prob = collapse(pm, PLUS, M)
    expected = PureState.from_vector([math.sqrt(0.7), math.sqrt(0.8)])
    assert post.fidelity(expected) == pytest.approx(1, abs=1e-12)
    assert prob == pytest.approx(0.75, abs=1e-12)
    with pytest.raises(DegenerateCollapseError):
        collapse(PartialMeasurement(1, 0), ONE, M)


def test_sample_measure_forced_outcomes():
    for i in range(200):
        o, post = sample_measure(PartialMeasurement(0, 1), ZERO, Stream(1, i))
        assert o is B and post.fidelity(ZERO) == pytest.approx(1)
        o, post = sample_measure(PartialMeasurement(1, 0), ONE, Stream(2, i))
        assert o is B and post.fidelity(ONE) == pytest.approx(1)


def test_sample_measure_born_frequency():
    pm = PartialMeasurement(0.5, 0.5)
    hits = sum(sample_measure(pm, ZERO, Stream(3, i))[0] is M for i in range(100_000))
    assert abs(hits / 100_000 - 0.5) < 0.005


def test_inverse_examples():
    np.testing.assert_allclose(inverse_kraus(PartialMeasurement(0.5, 0.5), M), math.sqrt(2) * np.eye(2), atol=1e-14)
    pm = PartialMeasurement(0.2, 0.3)
    m, b = kraus_pair(pm)
    assert is_identity(inverse_kraus(pm, M) @ m)
    assert is_identity(inverse_kraus(pm, B) @ b)
    with pytest.raises(NotInvertibleError):
        inverse_kraus(PartialMeasurement(0, 0.4), M)


@given(open_strengths, open_strengths)
def test_inverse_both_sides(p, q):
    pm = PartialMeasurement(p, q)
    for o, k in zip(Outcome, kraus_pair(pm)):
        inv = inverse_kraus(pm, o)
        assert is_identity(inv @ k, 1e-9) and is_identity(k @ inv, 1e-9)


def test_conditional_success_examples():
    pm = PartialMeasurement(0.2, 0.3)
    assert conditional_success(pm, M, ZERO) == pytest.approx(0.8, abs=1e-12)
    assert conditional_success(pm, M, PLUS) == pytest.approx(0.56 / 0.75, abs=1e-12)
    assert conditional_success(pm, B, PLUS) == pytest.approx(0.24, abs=1e-12)
    half = PartialMeasurement(0.5, 0.5)
    for psi in GRID:
        assert conditional_success(half, M, psi) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(DegenerateCollapseError):
        conditional_success(PartialMeasurement(1, 0), M, ONE)


@pytest.mark.parametrize("p, q", [(0.2, 0.3), (0.5, 0.5), (0.9, 0.05), (0.01, 0.99), (0.7, 0.7)])
def test_joint_reversal_is_state_independent(p, q):
    pm = PartialMeasurement(p, q)
    for psi in GRID:
        probs = dict(zip(Outcome, outcome_probabilities(pm, psi)))
        for o in Outcome:
            if probs[o] > 0:
                assert abs(probs[o] * conditional_success(pm, o, psi) - pm.path_probability(o)) < 1e-12


@pytest.mark.parametrize("p, q", [(0.2, 0.3), (0.5, 0.5), (0.9, 0.05)])
def test_successful_round_restores_state(p, q):
    pm = PartialMeasurement(p, q)
    for i, psi in enumerate(GRID):
        for o in Outcome:
            post, _ = collapse(pm, psi, o)
            for k in range(20):
                ok, state = reversal_round(pm, post, o, Stream(i, 100 * k + (o is B)))
                if ok:
                    assert state.fidelity(psi) == pytest.approx(1, abs=1e-12)


def test_reversal_round_conditional_rate():
    pm = PartialMeasurement(0.2, 0.3)
    post, _ = collapse(pm, PLUS, M)
    wins = sum(reversal_round(pm, post, M, Stream(11, i))[0] for i in range(100_000))
    assert abs(wins / 100_000 - 0.56 / 0.75) < 0.005


K3 = KOutcomeMeasurement((0.1, 0.4, 0.5), (0.2, 0.3, 0.5))


def test_k_outcome_reduces_to_pair():
    pm = PartialMeasurement(0.2, 0.3)
    km = KOutcomeMeasurement.from_partial(pm)
    for a, b in zip(k_outcome_operators(km), kraus_pair(pm)):
        np.testing.assert_allclose(a, b, atol=1e-15)
    for k, o in enumerate(Outcome):
        np.testing.assert_allclose(k_outcome_inverse(km, k), inverse_kraus(pm, o), atol=1e-12)


def test_k_outcome_three():
    ops = k_outcome_operators(K3)
    assert completeness_error(ops) < 1e-12
    for k, m in enumerate(ops):
        assert is_identity(k_outcome_inverse(K3, k) @ m)


def test_k_outcome_validation():
    with pytest.raises(ValueError):
        KOutcomeMeasurement((0.5, 0.5), (0.5, 0.4))
    with pytest.raises(ValueError):
        KOutcomeMeasurement((1.0,), (1.0,))
    with pytest.raises(NotInvertibleError):
        k_outcome_inverse(KOutcomeMeasurement((0.5, 0.5), (0.0, 1.0)), 0)


@given(thetas, phis)
def test_k_outcome_probabilities_sum(theta, phi):
    psi = state_from_angles(BlochAngles(theta, phi))
    assert abs(sum(k_outcome_probabilities(K3, psi)) - 1) < 1e-12


def test_k_outcome_path_state_independent():
    # each path k succeeds with probability p_k q_k whatever the state
    for psi in GRID:
        for k, m in enumerate(k_outcome_operators(K3)):
            v = m @ psi.vector
            v = np.array([v[1], v[0]])
            w = m @ v
            joint = float(np.vdot(w, w).real)
            assert abs(joint - K3.p_list[k] * K3.q_list[k]) < 1e-12
