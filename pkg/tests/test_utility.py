import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pricechoose as pc


def entropic_pair(space):
    return pc.EntropicUtility(1.0, space.probs)


@pytest.fixture
def coin():
    return pc.StateSpace(["h", "t"], [0.5, 0.5])


@pytest.fixture
def maxmin_coin(coin):
    priors = np.array([[0.5, 0.5], [0.3, 0.7], [0.6, 0.4]])
    return pc.MaxMinUtility(1.5, pc.CredalSet(priors, coin.probs))


def as_alloc(row, n=2, agent=0, m=None):
    m = len(row) if m is None else m
    xi = np.zeros((n, m))
    xi[agent] = row
    return xi


def test_constant_payoff_is_its_own_certainty_equivalent(coin, maxmin_coin):
    for c in (0.0, 1.0, -3.5, 0.7):
        xi = as_alloc([c, c])
        assert pc.evaluate(entropic_pair(coin), xi, 0) == pytest.approx(c, abs=1e-12)
        assert pc.evaluate(maxmin_coin, xi, 0) == pytest.approx(c, abs=1e-12)


def test_normalization_is_exact(coin, maxmin_coin):
    zero = np.zeros((2, 2))
    assert pc.evaluate(entropic_pair(coin), zero, 0) == 0.0
    assert pc.evaluate(maxmin_coin, zero, 0) == 0.0


def test_small_gamma_approaches_expectation(coin):
    u = pc.EntropicUtility(1e-6, coin.probs)
    xi = as_alloc([0.0, -1.0])
    expectation = float(np.dot(coin.probs, xi[0]))
    assert abs(pc.evaluate(u, xi, 0) - expectation) <= 1e-4


def test_entropic_closed_form_value(coin):
    # gamma=1, P=(1/2,1/2), payoff (0,-1): U = log(2 / (1 + e))
    u = entropic_pair(coin)
    expected = math.log(2.0) - math.log1p(math.e)
    assert pc.evaluate(u, as_alloc([0.0, -1.0]), 0) == pytest.approx(expected, abs=1e-14)


def test_worst_case_prior_singleton(coin):
    u = pc.MaxMinUtility(1.0, pc.CredalSet(coin.probs[None, :], coin.probs))
    assert pc.worst_case_prior(u, as_alloc([1.0, -2.0]), 0) == 0


def test_worst_case_prior_picks_pessimistic(coin):
    priors = np.array([[0.5, 0.5], [0.2, 0.8]])   # prior 1 loads the loss state
    u = pc.MaxMinUtility(1.0, pc.CredalSet(priors, coin.probs))
    xi = as_alloc([0.0, -1.0])
    vals = [-math.log(p0 + p1 * math.e) for p0, p1 in priors]
    assert vals[1] < vals[0]
    assert pc.worst_case_prior(u, xi, 0) == 1
    assert pc.evaluate(u, xi, 0) == pytest.approx(min(vals), abs=1e-14)


def test_worst_case_prior_tie_goes_to_lowest_index(maxmin_coin):
    assert pc.worst_case_prior(maxmin_coin, as_alloc([2.0, 2.0]), 0) == 0


def test_maxmin_is_minimum_over_priors(coin, maxmin_coin):
    xi = as_alloc([0.5, -1.5])
    per = [pc.evaluate(pc.EntropicUtility(1.5, p), xi, 0)
           for p in maxmin_coin.credal.priors]
    assert pc.evaluate(maxmin_coin, xi, 0) == pytest.approx(min(per), abs=1e-14)


def test_cash_invariance_examples(coin, maxmin_coin):
    xi = as_alloc([0.3, -2.0])
    assert pc.check_cash_invariance(entropic_pair(coin), xi, 0, 0.0) == 0.0
    assert pc.check_cash_invariance(entropic_pair(coin), xi, 0, 5.0) <= 1e-9
    assert pc.check_cash_invariance(maxmin_coin, xi, 0, -2.0) <= 1e-9


def test_cash_invariance_sweep_on_grid(two_state):
    _, _, profile, grid = two_state
    worst = 0.0
    for k in range(0, grid.n_points, 5):
        for i, u in enumerate(profile.evaluators):
            for c in (-10.0, -1.0, 0.0, 1.0, 10.0):
                worst = max(worst, pc.check_cash_invariance(u, grid.point(k), i, c))
    assert worst <= 1e-9


@given(st.lists(st.floats(-5, 5, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=2),
       st.lists(st.floats(0, 3, allow_nan=False, allow_infinity=False),
                min_size=2, max_size=2))
@settings(max_examples=100, deadline=None)
def test_monotonicity(base, bump):
    u = pc.EntropicUtility(0.8, np.array([0.5, 0.5]))
    lo = pc.evaluate(u, as_alloc(base), 0)
    hi = pc.evaluate(u, as_alloc([b + d for b, d in zip(base, bump)]), 0)
    assert lo <= hi + 1e-12


def test_maxmin_dominated_by_reference(coin, maxmin_coin, two_state):
    _, _, _, grid = two_state
    mm = pc.MaxMinUtility(1.5, pc.CredalSet(
        np.array([[0.6, 0.4], [0.4, 0.6]]), np.array([0.6, 0.4])))
    ref = pc.EntropicUtility(1.5, np.array([0.6, 0.4]))
    mm_vals = pc.evaluate_grid(mm, grid, 0)
    ref_vals = pc.evaluate_grid(ref, grid, 0)
    assert np.all(mm_vals <= ref_vals + 1e-12)


def test_sup_norm_lipschitz(two_state):
    _, _, profile, grid = two_state
    rng = np.random.default_rng(5)
    for _ in range(60):
        a, b = rng.integers(0, grid.n_points, size=2)
        for i, u in enumerate(profile.evaluators):
            gap = abs(pc.evaluate(u, grid.point(int(a)), i)
                      - pc.evaluate(u, grid.point(int(b)), i))
            sup = float(np.abs(grid.point(int(a))[i] - grid.point(int(b))[i]).max())
            assert gap <= sup + 1e-9


def test_concavity_on_segments(two_state):
    _, _, profile, grid = two_state
    rng = np.random.default_rng(6)
    for _ in range(40):
        a, b = rng.integers(0, grid.n_points, size=2)
        xa, xb = grid.point(int(a)), grid.point(int(b))
        for i, u in enumerate(profile.evaluators):
            ua, ub = pc.evaluate(u, xa, i), pc.evaluate(u, xb, i)
            for t in (0.25, 0.5, 0.75):
                mid = pc.evaluate(u, t * xa + (1 - t) * xb, i)
                assert mid >= t * ua + (1 - t) * ub - 1e-9


def test_nan_rejected(coin):
    with pytest.raises(pc.ValidationError, match="NaN"):
        pc.evaluate(entropic_pair(coin), as_alloc([np.nan, 0.0]), 0)


def test_nonpositive_gamma_rejected(coin):
    with pytest.raises(pc.ValidationError):
        pc.EntropicUtility(0.0, coin.probs)
    with pytest.raises(pc.ValidationError):
        pc.MaxMinUtility(-1.0, pc.CredalSet(coin.probs[None, :], coin.probs))


def test_large_gamma_no_overflow(coin):
    u = pc.EntropicUtility(200.0, coin.probs)
    val = pc.evaluate(u, as_alloc([0.0, -3.0]), 0)
    assert np.isfinite(val)
    # worst state dominates: certainty equivalent approaches the minimum
    assert val == pytest.approx(-3.0 + math.log(2.0) / 200.0, abs=1e-6)


def test_credal_set_validation(coin):
    with pytest.raises(pc.ValidationError, match="sum"):
        pc.CredalSet(np.array([[0.5, 0.4]]), coin.probs)
    with pytest.raises(pc.ValidationError, match="strictly positive"):
        pc.CredalSet(np.array([[1.0, 0.0], [0.5, 0.5]]), coin.probs)
    with pytest.raises(pc.ValidationError, match="reference"):
        pc.CredalSet(np.array([[0.4, 0.6]]), coin.probs)
    with pytest.raises(pc.ValidationError, match="Lipschitz"):
        pc.CredalSet(coin.probs[None, :], coin.probs, lip_bound=-1.0)


def test_estimate_lipschitz_deterministic(two_state):
    _, _, profile, grid = two_state
    a = pc.estimate_lipschitz(profile.evaluators[0], grid, 0)
    b = pc.estimate_lipschitz(profile.evaluators[0], grid, 0)
    assert a == b and a > 0.0


def test_estimate_lipschitz_risk_neutral_mass_bound(two_state):
    _, _, _, grid = two_state
    u = pc.EntropicUtility(1e-9, grid.metric.probs)
    for agent in range(2):
        est = pc.estimate_lipschitz(u, grid, agent)
        c = grid.metric.agent_mass_weights[agent]
        assert est <= c * (1.0 + 1e-6) + 1e-9


def test_estimate_lipschitz_warns_on_miscalibrated_bound(two_state):
    _, _, _, grid = two_state
    mm = pc.MaxMinUtility(1.5, pc.CredalSet(
        np.array([[0.6, 0.4]]), np.array([0.6, 0.4]), lip_bound=1e-9))
    with pytest.warns(UserWarning, match="miscalibrated"):
        pc.estimate_lipschitz(mm, grid, 0)


def test_avg_utility_constant_and_hand(hand):
    _, _, profile, grid = hand
    assert pc.avg_utility(profile.evaluators[1], grid, 1) == pytest.approx(-0.5, abs=1e-12)


def test_avg_utility_maxmin_below_reference(two_state):
    space, _, _, grid = two_state
    mm = pc.MaxMinUtility(1.0, pc.CredalSet(
        np.array([[0.6, 0.4], [0.3, 0.7]]), space.probs))
    ref = pc.EntropicUtility(1.0, space.probs)
    assert pc.avg_utility(mm, grid, 0) <= pc.avg_utility(ref, grid, 0) + 1e-12


def test_profile_matrix_matches_pointwise(two_state):
    _, _, profile, grid = two_state
    umat = profile.matrix(grid)
    for k in (0, 17, grid.n_points - 1):
        assert umat[k] == pytest.approx(profile.at_point(grid.point(k)), abs=1e-14)
