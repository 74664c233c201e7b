"""Prediction markets with CARA agents: demand, equilibrium prices, and opinion pools."""

from __future__ import annotations

from .agent import (
    CaraAgent,
    DemandSolution,
    SolverConfig,
    SolverTrace,
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
from .equilibrium import (
    Economy,
    EquilibriumConfig,
    EquilibriumResult,
    SuperAgent,
    closed_form_prices,
    equilibrium_disjoint_pair,
    equilibrium_single,
    excess_demand,
    make_super_agent,
    solve_equilibrium_numeric,
)
from .errors import ArbitrageError, BeliefMarketError, DomainError, SampleSpaceMismatch, ScenarioError, SolverError
from .event_space import (
    ConsistencyVerdict,
    Event,
    JointBelief,
    SampleSpace,
    SecuritySet,
    are_independent,
    check_consistency,
    check_unit_combinations,
    conditional_probability,
    event_probability,
    payoff,
    payoffs,
)
from .pooling import WeightVector, disagreement, linear_pool, logop_normalized, logop_unnormalized, risk_weights
from .runner import Report, run, surface_grid
from .scenario import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
