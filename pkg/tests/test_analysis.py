import math

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from arqwep.analysis import (
    ATTACK_FRAMES_NEEDED,
    RateReport,
    attack_time_estimate,
    eve_equivalent_erasure,
    eve_useful_frames_bound,
    eve_useful_frames_sum,
    eve_useful_frames_variance,
    expected_trials,
    init_frames_for_overhead,
    key_rate,
    monte_carlo_expectation,
    noisy_feedback_capacity_rate,
    report_rows,
    rows_to_csv,
    secrecy_outage,
    secrecy_outage_given,
    secret_key_capacity,
)
from arqwep.channel import CorrelatedMixture, Deterministic, ErasureTriple, IndependentBeta
from arqwep.errors import DivergentExpectationError

prob = st.floats(0.0, 1.0, allow_nan=False)
open_prob = st.floats(0.0, 0.95, allow_nan=False)


def det(gab=0.0, gae=0.0, gba=0.0):
    return Deterministic(ErasureTriple(gab, gae, gba))


TWO_ATOMS = CorrelatedMixture((0.5, 0.5), (ErasureTriple(0.0, 0.5, 0.1), ErasureTriple(0.2, 0.1, 0.2)))


# --- capacity and rates ---------------------------------------------------------

def test_capacity_examples():
    assert secret_key_capacity(det(0.1, 0.2)) == pytest.approx(0.18)
    assert secret_key_capacity(det(0.3, 0.0)) == 0.0
    # 0.5 * (1.0 * 0.5) + 0.5 * (0.8 * 0.1)
    assert secret_key_capacity(TWO_ATOMS) == pytest.approx(0.29)


def test_equivalent_erasure_examples():
    assert eve_equivalent_erasure(ErasureTriple(1.0, 0.7)) == 0.0
    assert eve_equivalent_erasure(ErasureTriple(0.0, 1.0)) == 1.0
    assert eve_equivalent_erasure(ErasureTriple(0.3, 0.4)) == pytest.approx(0.28)


def test_noisy_rate_examples():
    assert noisy_feedback_capacity_rate(det(0.1, 0.2, 0.1)) == pytest.approx(0.162)
    assert noisy_feedback_capacity_rate(det(0.1, 0.2, 0.0)) == pytest.approx(secret_key_capacity(det(0.1, 0.2)))
    # 0.5 * (1.0 * 0.9 * 0.5) + 0.5 * (0.8 * 0.8 * 0.1)
    assert noisy_feedback_capacity_rate(TWO_ATOMS) == pytest.approx(0.257)


triples = st.tuples(prob, prob, prob)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), triples), min_size=1, max_size=4))
def test_feedback_loss_never_helps(atoms):
    total = sum(w for w, _ in atoms)
    model = CorrelatedMixture(tuple(w / total for w, _ in atoms), tuple(ErasureTriple(*t) for _, t in atoms))
    c3, c5 = secret_key_capacity(model), noisy_feedback_capacity_rate(model)
    assert c3 >= c5 - 1e-12
    if all(t[2] == 0.0 for _, t in atoms):
        assert c3 == pytest.approx(c5, abs=1e-15)


def test_feedback_loss_strictly_lowers_rate_when_it_bites():
    assert secret_key_capacity(det(0.1, 0.2, 0.05)) > noisy_feedback_capacity_rate(det(0.1, 0.2, 0.05))


def test_outage_examples():
    assert secrecy_outage(det(gae=0.2), 10) == pytest.approx(0.8**10)
    assert secrecy_outage(det(gae=0.2), 10) == pytest.approx(0.10737, abs=5e-6)
    assert secrecy_outage(det(gae=0.0), 1) == 1.0
    assert secrecy_outage_given([0.2] * 10) == pytest.approx(0.8**10)
    with pytest.raises(ValueError):
        secrecy_outage(det(gae=0.2), 0)
    with pytest.raises(ValueError):
        secrecy_outage_given([])


def test_outage_and_rate_decrease_in_k():
    model = IndependentBeta((2, 8), (1, 4), (1, 20))
    outs = [secrecy_outage(model, k) for k in range(1, 101)]
    rates = [key_rate(model, k) for k in range(1, 101)]
    assert all(a > b for a, b in zip(outs, outs[1:]))
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_trials_and_rate_examples():
    assert expected_trials(det(0.2), 10) == pytest.approx(12.5)
    assert expected_trials(det(0.2, 0, 0.5), 10, with_feedback_loss=True) == pytest.approx(25.0)
    assert key_rate(det(0.2, 0, 0.0), 10) == pytest.approx(0.08)
    assert key_rate(det(0.2, 0, 0.5), 10, with_feedback_loss=True) == pytest.approx(0.04)


@given(st.floats(0.0, 0.99), st.integers(1, 1000))
def test_trials_linear_in_k(gab, k):
    assert expected_trials(det(gab), k) == pytest.approx(k * expected_trials(det(gab), 1))


@pytest.mark.parametrize(
    "model, fb",
    [
        (det(1.0), False),
        (det(0.1, 0.0, 1.0), True),
        (IndependentBeta((2, 1), (1, 1)), False),
        (IndependentBeta((2, 3), (1, 1), (1, 0.5)), True),
        (CorrelatedMixture((0.9, 0.1), (ErasureTriple(0.1, 0.1), ErasureTriple(1.0, 0.1))), False),
    ],
)
def test_divergent_trials(model, fb):
    with pytest.raises(DivergentExpectationError):
        expected_trials(model, 10, fb)


def test_zero_weight_atom_at_one_is_harmless():
    model = CorrelatedMixture((1.0, 0.0), (ErasureTriple(0.2, 0.1), ErasureTriple(1.0, 0.1)))
    assert expected_trials(model, 10) == pytest.approx(12.5)


# --- quadrature against closed-form Beta moments ----------------------------------

@given(st.floats(0.5, 20), st.floats(1.5, 20), st.floats(0.5, 20), st.floats(0.5, 20))
def test_beta_quadrature_matches_moments(a1, b1, a2, b2):
    model = IndependentBeta((a1, b1), (a2, b2))
    m_ab, m_ae = a1 / (a1 + b1), a2 / (a2 + b2)
    assert secret_key_capacity(model) == pytest.approx((1 - m_ab) * m_ae, rel=1e-10)
    assert secrecy_outage(model, 3) == pytest.approx((1 - m_ae) ** 3, rel=1e-10)
    # E[1/(1-X)] for X ~ Beta(a, b) is (a+b-1)/(b-1)
    assert expected_trials(model, 1) == pytest.approx((a1 + b1 - 1) / (b1 - 1), rel=1e-8)


def test_beta_quadrature_matches_monte_carlo():
    model = IndependentBeta((2, 8), (3, 5), (1, 9))
    fn = lambda ab, ae, ba: (1 - ab) * (1 - ba) * ae  # noqa: E731
    mc, se = monte_carlo_expectation(model, fn, 10**6, seed=1)
    assert abs(noisy_feedback_capacity_rate(model) - mc) <= 4 * se


def test_beta_inverse_moment_matches_monte_carlo():
    model = IndependentBeta((2, 8), (3, 5), (1, 9))
    mc, se = monte_carlo_expectation(model, lambda ab, ae, ba: 1 / ((1 - ab) * (1 - ba)), 10**6, seed=3)
    assert abs(expected_trials(model, 1, with_feedback_loss=True) - mc) <= 4 * se


def test_mixture_monte_carlo():
    mc, se = monte_carlo_expectation(TWO_ATOMS, lambda ab, ae, ba: (1 - ab) * ae, 10**5, seed=2)
    assert abs(mc - 0.29) <= 4 * se


# --- Eve's useful frames ---------------------------------------------------------

def test_bound_examples():
    assert eve_useful_frames_bound(0.9, 7, 7) == 0.0
    p = 0.996
    assert eve_useful_frames_bound(det(gae=0.004), 0, 100_000) == pytest.approx(p * (1 - p**100_000) / (1 - p))
    near_eve = eve_useful_frames_bound(det(0.005, 0.004, 0.009), 0, 100_000)
    assert near_eve == pytest.approx(249.0, abs=0.05)
    assert eve_useful_frames_bound(det(gae=0.0), 3, 10) == 7.0
    with pytest.raises(ValueError):
        eve_useful_frames_bound(0.5, 5, 4)


@pytest.mark.parametrize("p", [0.0, 0.3, 0.9, 0.996, 1.0])
def test_bound_equals_brute_force_sum(p):
    for k in range(0, 51):
        for k_i in range(0, k + 1):
            assert eve_useful_frames_bound(p, k_i, k) == pytest.approx(eve_useful_frames_sum(p, k_i, k),
                                                                       rel=1e-12, abs=1e-12)


@given(st.floats(0.0, 1.0), st.integers(0, 200), st.integers(0, 200))
def test_bound_non_increasing_in_ki(p, a, b):
    k = 200
    lo, hi = min(a, b), max(a, b)
    assert eve_useful_frames_bound(p, lo, k) >= eve_useful_frames_bound(p, hi, k) - 1e-12


@pytest.mark.parametrize("p, k_i, k", [(0.5, 0, 10), (0.9, 3, 40), (0.99, 0, 300), (0.996, 100, 1000)])
def test_variance_against_exact_distribution(p, k_i, k):
    n = k - k_i
    # P(U >= u) = p^(k_i+u); P(U = n) = p^k
    probs = [1 - p ** (k_i + 1)] + [p ** (k_i + u) - p ** (k_i + u + 1) for u in range(1, n)] + [p**k]
    assert sum(probs) == pytest.approx(1.0)
    mean = sum(u * q for u, q in enumerate(probs))
    var = sum(u * u * q for u, q in enumerate(probs)) - mean**2
    assert mean == pytest.approx(eve_useful_frames_bound(p, k_i, k), rel=1e-9)
    assert eve_useful_frames_variance(p, k_i, k) == pytest.approx(var, rel=1e-6)


# --- attack time ---------------------------------------------------------------------

def test_attack_time_baseline_passthrough():
    t = attack_time_estimate(100_000, 100_000, baseline_minutes=10)
    assert t.minutes == pytest.approx(10.0)
    assert t.frame_rate == pytest.approx(ATTACK_FRAMES_NEEDED / 600)


@given(st.floats(1e-3, 1e6), st.integers(1, 10**6))
def test_attack_time_halving_doubles(useful, frames):
    a = attack_time_estimate(useful, frames)
    b = attack_time_estimate(useful / 2, frames)
    assert b.seconds == pytest.approx(2 * a.seconds)


def test_attack_time_unbounded():
    t = attack_time_estimate(0.0, 100_000)
    assert t.unbounded and t.human() == "effectively unbounded"


def test_attack_time_assumptions_listed():
    t = attack_time_estimate(249, 100_000)
    assert len(t.assumptions) == 3
    assert any("frames/s" in a for a in t.assumptions)


def test_attack_time_units():
    t = attack_time_estimate(1.0, 3600 * 2500)  # one session per 1/useful frame, one hour each
    assert t.hours == pytest.approx(1.5e6)
    assert t.days == pytest.approx(1.5e6 / 24)
    assert t.human().endswith("years")


def test_init_frames_for_overhead_inverts_ratio():
    n = init_frames_for_overhead(0.001, 100_000, 1500)
    ratio = n * 42 / (n * 42 + 100_000 * 1500)
    assert ratio == pytest.approx(0.001, rel=1e-3)
    assert init_frames_for_overhead(0.0, 100_000, 1500) == 0


# --- reporting ------------------------------------------------------------------------

def test_report_rows_csv():
    rows = report_rows(det(0.1, 0.2, 0.1), k=10)
    text = rows_to_csv(rows)
    lines = text.strip().splitlines()
    assert lines[0] == "formula,inputs,value"
    names = [r.formula for r in rows]
    assert names[:4] == ["capacity", "equivalent-erasure", "noisy-rate", "outage"]
    assert "capacity,,0.18" in lines[1]
    assert all(r.value >= 0 for r in rows)


def test_report_rows_survive_divergence():
    rows = {r.formula: r.value for r in report_rows(det(1.0, 0.2), k=10)}
    assert math.isinf(rows["trials"]) and rows["rate"] == 0.0


def test_rate_report_rejects_negative():
    with pytest.raises(ValueError):
        RateReport("x", -1.0)


@given(open_prob, open_prob)
def test_probabilities_bounded(gab, gae):
    assume(gab < 1)
    m = det(gab, gae)
    assert 0 <= secret_key_capacity(m) <= 1
    assert 0 <= secrecy_outage(m, 5) <= 1
