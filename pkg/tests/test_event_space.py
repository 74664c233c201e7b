from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefmarket import (
    DomainError,
    Event,
    JointBelief,
    SampleSpace,
    SampleSpaceMismatch,
    SecuritySet,
    are_independent,
    check_consistency,
    check_unit_combinations,
    conditional_probability,
    demand_single,
    event_probability,
    payoff,
    payoffs,
)
from beliefmarket.event_space import EPS_MASS, MassClampWarning
from beliefmarket.oracles import measure_exists_by_vertices

SPACE4 = SampleSpace(("AB", "A~B", "~AB", "~A~B"))
A4 = SPACE4.event(["AB", "A~B"])
B4 = SPACE4.event(["AB", "~AB"])
BIN = SampleSpace(("A", "~A"))
A2 = BIN.event(["A"])
CORRELATED = JointBelief(SPACE4, np.array([0.4, 0.1, 0.1, 0.4]))


# --- construction ------------------------------------------------------------

def test_sample_space_rejects_tiny_and_duplicate():
    with pytest.raises(DomainError):
        SampleSpace(("only",))
    with pytest.raises(DomainError, match="duplicate"):
        SampleSpace(("a", "b", "a"))


def test_product_space_labels():
    assert SampleSpace.product(("A", "~A"), ("B", "~B")).atoms == SPACE4.atoms


def test_event_must_be_proper():
    with pytest.raises(DomainError, match="proper"):
        BIN.event(["A", "~A"])
    with pytest.raises(DomainError):
        Event(BIN, frozenset())


def test_event_complement_and_disjointness():
    assert A2.complement().labels == ("~A",)
    assert A2.isdisjoint(A2.complement())
    assert not A4.isdisjoint(B4)


def test_belief_validation():
    with pytest.raises(DomainError):
        JointBelief(BIN, np.array([0.5, 0.48]))
    with pytest.raises(DomainError):
        JointBelief(BIN, np.array([1.0, 0.0]))
    b = JointBelief(BIN, np.array([0.3, 0.7]))
    with pytest.raises(ValueError):
        b.mass[0] = 0.5


def test_clamping_warns_and_renormalizes():
    with pytest.warns(MassClampWarning):
        b = JointBelief.from_masses(SPACE4, [0.5, 0.0, 0.0, 0.5], clamp=True)
    assert b.mass.min() >= EPS_MASS
    assert math.isclose(math.fsum(b.mass), 1.0, abs_tol=1e-15)


def test_product_belief_is_independent():
    b = JointBelief.product(0.6, 0.3)
    np.testing.assert_allclose(b.mass, [0.18, 0.42, 0.12, 0.28])
    assert are_independent(b, A4, B4)


# --- probabilities -----------------------------------------------------------

def test_event_probability_examples():
    assert event_probability(JointBelief.uniform(SPACE4), A4) == 0.5
    three = SampleSpace(("w0", "w1", "w2"))
    b = JointBelief(three, np.array([0.5, 0.3, 0.2]))
    assert math.isclose(event_probability(b, three.event(["w0", "w2"])), 0.7, abs_tol=1e-15)


def test_conditional_probability_examples():
    assert math.isclose(conditional_probability(JointBelief.product(0.5, 0.3), A4, B4), 0.5)
    assert math.isclose(conditional_probability(CORRELATED, A4, B4), 0.8)
    assert math.isclose(conditional_probability(CORRELATED, A4, B4.complement()), 0.2)


def test_correlated_belief_not_independent():
    assert not are_independent(CORRELATED, A4, B4, tol=1e-9)


def test_space_mismatch():
    with pytest.raises(SampleSpaceMismatch):
        event_probability(JointBelief.uniform(BIN), A4)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12), st.data())
def test_event_probability_strictly_inside(raw, data):
    mass = np.array(raw) / math.fsum(raw)
    space = SampleSpace(tuple(f"w{i}" for i in range(len(raw))))
    members = data.draw(st.sets(st.integers(0, len(raw) - 1), min_size=1, max_size=len(raw) - 1))
    pr = event_probability(JointBelief(space, mass), Event(space, frozenset(members)))
    assert 0 < pr < 1


# --- payoffs -----------------------------------------------------------------

def test_payoff_examples():
    sec = SecuritySet((A4, B4), (0.5, 0.5))
    assert all(payoff(sec, [0, 0], w) == 0 for w in range(4))
    single = SecuritySet((A2,), (0.5,))
    assert payoff(single, [1.0], 0) == 0.5
    assert payoff(single, [1.0], 1) == -0.5
    fig3 = SecuritySet((A2, A2), (0.7, 0.3))
    np.testing.assert_allclose(payoffs(fig3, [-1, 1]), [0.4, 0.4], atol=1e-15)


@given(
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_payoff_is_linear(x, y, a, b):
    space = SampleSpace(tuple(f"w{i}" for i in range(5)))
    sec = SecuritySet((space.event(["w0", "w1"]), space.event(["w1", "w2", "w3"]), space.event(["w4"])), (0.3, 0.5, 0.2))
    x, y = np.array(x), np.array(y)
    for w in range(5):
        lhs = payoff(sec, a * x + b * y, w)
        rhs = a * payoff(sec, x, w) + b * payoff(sec, y, w)
        assert math.isclose(lhs, rhs, abs_tol=1e-11)
    np.testing.assert_allclose(payoffs(sec, x), [payoff(sec, x, w) for w in range(5)], atol=1e-12)


# --- consistency -------------------------------------------------------------

@pytest.mark.parametrize("p", [0.01, 0.37, 0.5, 0.99])
def test_single_security_consistent(p):
    sec = SecuritySet((A2,), (p,))
    v = check_consistency(sec)
    assert v.consistent and v.verify(sec)
    assert math.isclose(v.measure[0], p, abs_tol=1e-12)


def test_figure3_duplicate_is_inconsistent():
    sec = SecuritySet((A2, A2), (0.7, 0.3))
    v = check_consistency(sec)
    assert not v.consistent
    np.testing.assert_array_equal(v.direction, [-1.0, 1.0])
    assert v.verify(sec)


def test_exhaustive_disjoint_prices_sum_to_one():
    three = SampleSpace(("A", "B", "neither"))
    sec = SecuritySet((three.event(["A"]), three.event(["B"])), (0.4, 0.6))
    v = check_consistency(sec)
    assert not v.consistent
    np.testing.assert_array_equal(v.direction, [-1.0, -1.0])
    pay = payoffs(sec, v.direction)
    assert pay.min() >= 0 and pay[2] > 0


def test_unit_combinations_examples():
    assert check_unit_combinations(SecuritySet((A2,), (0.5,))).consistent
    fig3 = check_unit_combinations(SecuritySet((A2, A2), (0.7, 0.3)))
    assert not fig3.consistent
    np.testing.assert_array_equal(fig3.direction, [-1, 1])


def test_duplicate_at_equal_prices_splits_the_two_checks():
    sec = SecuritySet((A2, A2), (0.5, 0.5))
    literal = check_unit_combinations(sec)
    assert not literal.consistent
    assert np.all(payoffs(sec, literal.direction) == 0)
    # a strictly positive implied measure exists, so the measure test accepts
    assert check_consistency(sec).consistent


def test_unit_combination_cap():
    space = SampleSpace(tuple(f"w{i}" for i in range(3)))
    sec = SecuritySet(tuple(space.event(["w0"]) for _ in range(13)), (0.3,) * 13)
    with pytest.raises(DomainError, match="capped"):
        check_unit_combinations(sec)


def test_consistent_measure_zeroes_every_closed_form_demand():
    sec = SecuritySet((A4, B4), (0.3, 0.6))
    v = check_consistency(sec)
    q = JointBelief(SPACE4, v.measure)
    for ev, p in zip(sec.events, sec.prices):
        assert abs(demand_single(event_probability(q, ev), 1.0, p)) <= 1e-9


def _random_structure(rng, n_atoms, m):
    space = SampleSpace(tuple(f"w{i}" for i in range(n_atoms)))
    events = []
    while len(events) < m:
        mask = rng.random(n_atoms) < 0.5
        if 0 < mask.sum() < n_atoms:
            events.append(space.event([f"w{i}" for i in np.flatnonzero(mask)]))
    return space, tuple(events)


def test_agrees_with_vertex_enumeration_oracle():
    rng = np.random.default_rng(11)
    seen = {True: 0, False: 0}
    for _ in range(300):
        n_atoms = int(rng.integers(2, 9))
        m = int(rng.integers(1, 5))
        _, events = _random_structure(rng, n_atoms, m)
        prices = rng.uniform(0.05, 0.95, m)
        sec = SecuritySet(events, prices)
        v = check_consistency(sec)
        expected = measure_exists_by_vertices(sec.incidence, prices)
        assert v.consistent == expected
        assert v.verify(sec) or (not v.consistent and v.direction is None)
        seen[expected] += 1
    assert seen[True] > 30 and seen[False] > 30


def test_agrees_with_oracle_at_larger_sizes():
    rng = np.random.default_rng(5)
    for _ in range(25):
        _, events = _random_structure(rng, int(rng.integers(9, 17)), int(rng.integers(3, 7)))
        # prices from a random measure, nudged off it half the time
        q = rng.dirichlet(np.ones(len(events[0].space.atoms)))
        prices = np.clip(np.array([q[sorted(e.members)].sum() for e in events]) + rng.normal(0, 0.1) * (rng.random() < 0.5), 0.02, 0.98)
        sec = SecuritySet(events, prices)
        assert check_consistency(sec).consistent == measure_exists_by_vertices(sec.incidence, prices)


@given(st.integers(0, 10_000))
def test_certificates_always_verify(seed):
    rng = np.random.default_rng(seed)
    _, events = _random_structure(rng, int(rng.integers(2, 8)), int(rng.integers(1, 5)))
    sec = SecuritySet(events, rng.uniform(0.02, 0.98, len(events)))
    v = check_consistency(sec)
    if v.consistent:
        assert v.verify(sec) and v.measure.min() >= 1e-9 - 1e-15
    elif v.direction is not None:
        pay = sec.payoff_matrix @ v.direction
        assert pay.min() >= -1e-8 and pay.max() > 1e-8


def test_zero_forced_mass_gives_weak_arbitrage():
    # Pr(A) = Pr(AB) forces zero mass on A~B: buying A and selling AB never loses
    space = SampleSpace(("AB", "A~B", "~A"))
    sec = SecuritySet((space.event(["AB", "A~B"]), space.event(["AB"])), (0.5, 0.5))
    v = check_consistency(sec)
    assert not v.consistent
    np.testing.assert_array_equal(v.direction, [1.0, -1.0])
    np.testing.assert_allclose(payoffs(sec, v.direction), [0.0, 1.0, 0.0], atol=1e-15)


def test_measure_below_floor_is_rejected_with_tolerance_certificate():
    # a positive measure exists, but only with mass 5e-10 < eps on A~B
    space = SampleSpace(("AB", "A~B", "~A"))
    sec = SecuritySet((space.event(["AB", "A~B"]), space.event(["AB"])), (0.5, 0.5 - 5e-10))
    v = check_consistency(sec)
    assert not v.consistent
    np.testing.assert_array_equal(v.direction, [1.0, -1.0])
    assert v.verify(sec)
    assert 0 < v.residual <= 1e-9
    assert check_consistency(sec, eps=1e-10).consistent
