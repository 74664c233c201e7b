from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefmarket import (
    ArbitrageError,
    CaraAgent,
    DomainError,
    JointBelief,
    SampleSpace,
    SecuritySet,
    SolverConfig,
    SolverError,
    best_response,
    certainty_equivalent,
    demand_disjoint_pair,
    demand_general,
    demand_pair_fixed_point,
    demand_single,
    expected_utility,
    utility_gradient,
    utility_hessian,
)
from beliefmarket.oracles import (
    cara_utility_atoms,
    cara_utility_single,
    central_difference,
    demand_single_numeric,
    grid_argmax_2d,
)

SPACE4 = SampleSpace(("AB", "A~B", "~AB", "~A~B"))
A4 = SPACE4.event(["AB", "A~B"])
B4 = SPACE4.event(["AB", "~AB"])
BIN = SampleSpace(("A", "~A"))
A2 = BIN.event(["A"])
TRIPLE = SampleSpace(("A", "B", "neither"))

probs = st.floats(0.02, 0.98)
risk = st.floats(0.25, 4.0)


def binary(pr: float, c: float = 1.0) -> CaraAgent:
    return CaraAgent(JointBelief(BIN, np.array([pr, 1 - pr])), c)


def pair_agent(mass, c: float = 1.0) -> CaraAgent:
    return CaraAgent(JointBelief(SPACE4, np.asarray(mass, dtype=float)), c)


def test_agent_rejects_nonpositive_risk_aversion():
    with pytest.raises(DomainError):
        binary(0.5, 0.0)
    with pytest.raises(DomainError):
        binary(0.5, -1.0)


# --- utility -----------------------------------------------------------------

@given(st.integers(0, 1000))
def test_zero_bundle_utility_is_exactly_minus_one(seed):
    rng = np.random.default_rng(seed)
    agent = pair_agent(rng.dirichlet(np.ones(4)) * 0.9 + 0.025, rng.uniform(0.1, 5))
    sec = SecuritySet((A4, B4), rng.uniform(0.05, 0.95, 2))
    assert expected_utility(agent, sec, [0, 0]) == -1.0
    assert certainty_equivalent(agent, sec, [0, 0]) == 0.0


def test_figure1_origin_is_grid_maximum():
    agent = pair_agent([0.25] * 4)
    sec = SecuritySet((A4, B4), (0.5, 0.5))
    grid = [expected_utility(agent, sec, [a, b]) for a in range(-2, 3) for b in range(-2, 3)]
    assert expected_utility(agent, sec, [0, 0]) == -1.0 == max(grid)


def test_utility_at_single_security_optimum():
    # substituting the optimal demand gives -2 sqrt(Pr(A) Pr(~A))
    sec = SecuritySet((A2,), (0.5,))
    u = expected_utility(binary(0.8), sec, [math.log(4)])
    assert math.isclose(u, -2 * math.sqrt(0.8 * 0.2), rel_tol=1e-14)
    assert math.isclose(u, float(cara_utility_single(0.8, 1.0, 0.5, math.log(4))), rel_tol=1e-14)


def test_utility_overflow_is_a_range_error():
    sec = SecuritySet((A2,), (0.5,))
    with pytest.raises(DomainError):
        expected_utility(binary(0.5), sec, [-5000.0])
    # large but representable bundles stay finite
    assert math.isfinite(expected_utility(binary(0.5), sec, [-1000.0]))


@given(probs, risk, probs)
def test_gradient_sign_at_zero_follows_belief_minus_price(pr, c, p):
    g = utility_gradient(binary(pr, c), SecuritySet((A2,), (p,)), [0.0])[0]
    assert math.isclose(g, c * (pr - p), rel_tol=1e-12, abs_tol=1e-15)


@given(st.integers(0, 10_000))
def test_gradient_and_hessian_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    agent = pair_agent(rng.dirichlet(np.ones(4)), rng.uniform(0.25, 4))
    sec = SecuritySet((A4, B4), rng.uniform(0.05, 0.95, 2))
    x = rng.uniform(-2, 2, 2)
    g = utility_gradient(agent, sec, x)
    fd = central_difference(lambda v: expected_utility(agent, sec, v), x)
    assert np.max(np.abs(g - fd)) <= 1e-6 * np.max(np.abs(g)) + 1e-12
    H = utility_hessian(agent, sec, x)
    fdH = np.array([central_difference(lambda v: utility_gradient(agent, sec, v)[k], x) for k in range(2)])
    np.testing.assert_allclose(H, fdH, rtol=1e-5, atol=1e-9)
    assert np.all(np.linalg.eigvalsh(H) <= 1e-12)


# --- single security closed form ---------------------------------------------

def test_demand_single_examples():
    assert demand_single(0.3, 1.7, 0.3) == 0.0
    assert math.isclose(demand_single(0.8, 1.0, 0.5), 1.3862943611198906, rel_tol=1e-15)
    assert math.isclose(demand_single(0.8, 2.0, 0.5), 0.6931471805599453, rel_tol=1e-15)


@pytest.mark.parametrize("args", [(0.0, 1, 0.5), (1.0, 1, 0.5), (0.5, 1, 0.0), (0.5, 1, 1.0), (0.5, 0, 0.5)])
def test_demand_single_boundaries(args):
    with pytest.raises(DomainError):
        demand_single(*args)


def test_demand_single_matches_numeric_maximization():
    rng = np.random.default_rng(3)
    for _ in range(50):
        pr, p = rng.uniform(0.05, 0.95, 2)
        c = rng.uniform(0.5, 2.0)
        assert abs(demand_single(pr, c, p) - demand_single_numeric(pr, c, p, bound=20.0)) <= 1e-6


@given(probs, risk, probs)
def test_sign_law(pr, c, p):
    x = demand_single(pr, c, p)
    assert np.sign(x) == np.sign(pr - p)
    assert demand_single(pr, c, pr) == 0.0


@given(probs, risk, probs)
def test_first_order_condition(pr, c, p):
    x = demand_general(binary(pr, c), SecuritySet((A2,), (p,))).bundle[0]
    lhs = pr * c * math.exp(-c * (1 - p) * x) / ((1 - pr) * c * math.exp(c * p * x))
    assert math.isclose(lhs, p / (1 - p), rel_tol=1e-6)


def test_general_matches_closed_form_on_one_security():
    rng = np.random.default_rng(7)
    for _ in range(500):
        pr, p = rng.uniform(0.02, 0.98, 2)
        c = rng.uniform(0.25, 4.0)
        sol = demand_general(binary(pr, c), SecuritySet((A2,), (p,)))
        assert abs(sol.bundle[0] - demand_single(pr, c, p)) <= 1e-9
        assert sol.converged and sol.gradient_norm <= 1e-10


# --- two securities ----------------------------------------------------------

def test_fixed_point_figure1():
    sol = demand_pair_fixed_point(pair_agent([0.25] * 4), SecuritySet((A4, B4), (0.5, 0.5)))
    np.testing.assert_array_equal(sol.bundle, [0.0, 0.0])
    assert sol.gradient_norm <= 1e-10


def test_fixed_point_independent_example():
    agent = CaraAgent(JointBelief.product(0.8, 0.6), 1.0)
    sec = SecuritySet((A4, B4), (0.5, 0.6))
    sol = demand_pair_fixed_point(agent, sec)
    np.testing.assert_allclose(sol.bundle, [math.log(4), 0.0], atol=1e-12)
    np.testing.assert_allclose(demand_general(agent, sec).bundle, sol.bundle, atol=1e-10)


def test_positive_correlation_shrinks_both_holdings():
    corr = pair_agent([0.4, 0.1, 0.1, 0.4])
    indep = CaraAgent(JointBelief.product(0.5, 0.5), 1.0)
    sec = SecuritySet((A4, B4), (0.4, 0.4))
    xc = demand_pair_fixed_point(corr, sec).bundle
    xi = demand_pair_fixed_point(indep, sec).bundle
    assert np.all(np.abs(xc) < np.abs(xi))
    np.testing.assert_allclose(xi, [math.log(1.5)] * 2, atol=1e-12)
    # symmetric first-order condition in t = exp(-x): 0.6 t^2 + 0.05 t - 0.4 = 0
    t = (-0.05 + math.sqrt(0.05**2 + 4 * 0.6 * 0.4)) / (2 * 0.6)
    np.testing.assert_allclose(xc, [-math.log(t)] * 2, atol=1e-12)
    # brute force locates the same optimum
    gx, gy, _ = grid_argmax_2d(lambda X, Y: cara_utility_atoms(corr.belief.mass, sec.incidence, sec.prices, 1.0, X, Y),
                               bound=5.0, coarse=201, fine_step=1e-3)
    assert abs(gx - xc[0]) <= 1e-3 and abs(gy - xc[1]) <= 1e-3


def test_correlated_belief_at_its_own_prices_does_not_trade():
    sol = demand_pair_fixed_point(pair_agent([0.4, 0.1, 0.1, 0.4]), SecuritySet((A4, B4), (0.5, 0.5)))
    np.testing.assert_allclose(sol.bundle, [0.0, 0.0], atol=1e-12)


@given(probs, probs, risk, probs, probs)
def test_separability_of_independent_beliefs(a, b, c, pa, pb):
    agent = CaraAgent(JointBelief.product(a, b), c)
    sol = demand_pair_fixed_point(agent, SecuritySet((A4, B4), (pa, pb)))
    expected = [demand_single(a, c, pa), demand_single(b, c, pb)]
    np.testing.assert_allclose(sol.bundle, expected, atol=1e-8)


@given(st.integers(0, 10_000))
def test_fixed_point_and_newton_agree(seed):
    rng = np.random.default_rng(seed)
    agent = pair_agent(rng.dirichlet(np.ones(4)) * 0.96 + 0.01, rng.uniform(0.25, 4))
    sec = SecuritySet((A4, B4), rng.uniform(0.05, 0.95, 2))
    fp = demand_pair_fixed_point(agent, sec)
    nt = demand_general(agent, sec)
    np.testing.assert_allclose(fp.bundle, nt.bundle, atol=1e-8)
    assert fp.gradient_norm <= 1e-10 and nt.gradient_norm <= 1e-10


def test_fixed_point_falls_back_to_newton_and_tags_trace():
    agent = pair_agent([0.4, 0.1, 0.1, 0.4])
    sec = SecuritySet((A4, B4), (0.3, 0.6))
    sol = demand_pair_fixed_point(agent, sec, SolverConfig(max_iter_fixpoint=2))
    assert sol.trace.method == "fixed-point>newton"
    assert "fallback" in sol.trace.tags
    np.testing.assert_allclose(sol.bundle, demand_general(agent, sec).bundle, atol=1e-12)


def test_newton_iteration_cap_raises_with_trace():
    sec = SecuritySet((A4, B4), (0.05, 0.9))
    with pytest.raises(SolverError) as err:
        demand_general(pair_agent([0.7, 0.1, 0.1, 0.1]), sec, SolverConfig(max_iter_newton=1))
    assert err.value.trace is not None and not err.value.trace.converged
    assert err.value.residual > 1e-10


def test_correlation_direction_via_pinned_best_response():
    sec = SecuritySet((A4, B4), (0.5, 0.5))
    neg = pair_agent([0.1, 0.4, 0.4, 0.1])  # Pr(A|B)=0.2 < Pr(A|~B)=0.8
    pos = pair_agent([0.4, 0.1, 0.1, 0.4])
    assert best_response(neg, sec, 0, [0, 1.0]) > best_response(neg, sec, 0, [0, -1.0])
    assert best_response(pos, sec, 0, [0, 1.0]) < best_response(pos, sec, 0, [0, -1.0])


def test_best_response_zero_pin_matches_fixed_point_half_step():
    agent = CaraAgent(JointBelief.product(0.8, 0.6), 1.0)
    sec = SecuritySet((A4, B4), (0.5, 0.6))
    assert math.isclose(best_response(agent, sec, 0, [0.0, 0.0]), math.log(4), rel_tol=1e-10)


@given(st.integers(0, 10_000))
def test_doubling_risk_aversion_halves_demand(seed):
    rng = np.random.default_rng(seed)
    mass = rng.dirichlet(np.ones(4)) * 0.96 + 0.01
    c = rng.uniform(0.25, 2.0)
    sec = SecuritySet((A4, B4), rng.uniform(0.05, 0.95, 2))
    x1 = demand_general(pair_agent(mass, c), sec).bundle
    x2 = demand_general(pair_agent(mass, 2 * c), sec).bundle
    np.testing.assert_allclose(x2, x1 / 2, rtol=1e-8, atol=1e-12)


def test_general_solver_matches_grid_search():
    rng = np.random.default_rng(21)
    for _ in range(8):
        mass = rng.dirichlet(np.ones(4)) * 0.9 + 0.025
        c = rng.uniform(0.5, 2.0)
        sec = SecuritySet((A4, B4), rng.uniform(0.2, 0.8, 2))
        agent = pair_agent(mass, c)
        sol = demand_general(agent, sec)
        *_, best = grid_argmax_2d(lambda X, Y: cara_utility_atoms(mass, sec.incidence, sec.prices, c, X, Y))
        assert abs(sol.utility - best) <= 1e-6
        assert sol.utility >= best - 1e-12


# --- disjoint pair -----------------------------------------------------------

def test_disjoint_pair_examples():
    assert demand_disjoint_pair(0.3, 0.2, 1.0, 0.3, 0.2) == (0.0, 0.0)
    xa, xb = demand_disjoint_pair(0.3, 0.3, 1.0, 0.2, 0.3)
    assert math.isclose(xa, math.log(0.15 / 0.08), rel_tol=1e-14)
    assert math.isclose(xa, 0.628608659422374, rel_tol=1e-12)
    assert math.isclose(xb, 0.22314355131420976, rel_tol=1e-12)


@given(st.integers(0, 10_000))
def test_disjoint_pair_matches_general_solver(seed):
    rng = np.random.default_rng(seed)
    pa, pb = rng.dirichlet(np.ones(3))[:2] * 0.94 + 0.02
    qa, qb = rng.dirichlet(np.ones(3))[:2] * 0.94 + 0.02
    c = rng.uniform(0.25, 4)
    agent = CaraAgent(JointBelief(TRIPLE, np.array([pa, pb, 1 - pa - pb])), c)
    sec = SecuritySet((TRIPLE.event(["A"]), TRIPLE.event(["B"])), (qa, qb))
    np.testing.assert_allclose(demand_general(agent, sec).bundle, demand_disjoint_pair(pa, pb, c, qa, qb), atol=1e-9)


def test_disjoint_pair_errors():
    with pytest.raises(ArbitrageError) as err:
        demand_disjoint_pair(0.3, 0.3, 1.0, 0.6, 0.4)
    np.testing.assert_array_equal(err.value.direction, [-1, -1])
    with pytest.raises(DomainError):
        demand_disjoint_pair(0.6, 0.4, 1.0, 0.3, 0.3)


# --- dependent securities ----------------------------------------------------

def test_duplicate_events_minimum_norm():
    sol = demand_general(binary(0.5), SecuritySet((A2, A2), (0.5, 0.5)))
    np.testing.assert_allclose(sol.bundle, [0.0, 0.0], atol=1e-15)
    assert "ridge" in sol.trace.tags


@given(probs, risk, probs)
def test_duplicate_events_total_equals_single_demand(pr, c, p):
    sol = demand_general(binary(pr, c), SecuritySet((A2, A2), (p, p)))
    assert abs(sol.bundle.sum() - demand_single(pr, c, p)) <= 1e-8
    # minimum norm splits evenly
    assert abs(sol.bundle[0] - sol.bundle[1]) <= 1e-10


def test_complementary_events_example():
    sol = demand_general(binary(0.8), SecuritySet((A2, A2.complement()), (0.5, 0.5)))
    assert math.isclose(sol.bundle[0] - sol.bundle[1], math.log(4), rel_tol=1e-12)
    assert "ridge" in sol.trace.tags


@given(probs, risk, probs)
def test_complementary_events_difference_equals_single_demand(pr, c, p):
    sol = demand_general(binary(pr, c), SecuritySet((A2, A2.complement()), (p, 1 - p)))
    assert abs(sol.bundle[0] - sol.bundle[1] - demand_single(pr, c, p)) <= 1e-8


def test_solvers_refuse_inconsistent_prices():
    sec = SecuritySet((A2, A2), (0.7, 0.3))
    for solver in (demand_general, demand_pair_fixed_point):
        with pytest.raises(ArbitrageError) as err:
            solver(binary(0.5), sec)
        np.testing.assert_array_equal(err.value.direction, [-1.0, 1.0])
        assert err.value.verdict is not None


def test_fixed_point_needs_two_securities():
    with pytest.raises(DomainError):
        demand_pair_fixed_point(binary(0.5), SecuritySet((A2,), (0.5,)))


def test_bundle_length_checked():
    with pytest.raises(DomainError):
        expected_utility(binary(0.5), SecuritySet((A2,), (0.5,)), [1.0, 2.0])
