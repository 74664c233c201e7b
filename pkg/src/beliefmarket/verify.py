"""Acceptance suite: every criterion as a seeded, self-contained check.

Each criterion draws from its own generator, seeded by ``seed`` and the
criterion number, so any one of them can be rerun in isolation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable

import numpy as np

from .agent import (
    CaraAgent,
    best_response,
    demand_general,
    demand_pair_fixed_point,
    demand_single,
    expected_utility,
    utility_gradient,
)
from .equilibrium import (
    Economy,
    EquilibriumConfig,
    EquilibriumResult,
    equilibrium_disjoint_pair,
    equilibrium_single,
    make_super_agent,
    solve_equilibrium_numeric,
)
from .errors import ArbitrageError
from .event_space import JointBelief, SampleSpace, SecuritySet, check_consistency
from .oracles import central_difference, demand_single_numeric, equilibrium_single_bisection
from .pooling import WeightVector, disagreement, logop_unnormalized

CONFIDENCE_TOL = 1e-3


@dataclass(frozen=True)
class CriterionResult:
    id: int
    name: str
    passed: bool
    value: float
    tol: float
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.id:>2}. {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _scaled(n: int, quick: bool) -> int:
    return max(10, n // 10) if quick else n


def _fixture(name: str):
    from .scenario import parse_scenario

    text = resources.files("beliefmarket").joinpath("fixtures", f"{name}.json").read_text(encoding="utf-8")
    return parse_scenario(text)


# --- shared spaces and generators --------------------------------------------

BINARY = SampleSpace(("A", "~A"))
EVENT_A = BINARY.event(["A"])
TRIPLE = SampleSpace(("A", "B", "neither"))
PAIR = SampleSpace(("AB", "A~B", "~AB", "~A~B"))
PAIR_A = PAIR.event(["AB", "A~B"])
PAIR_B = PAIR.event(["AB", "~AB"])


def _binary_agent(pr: float, c: float) -> CaraAgent:
    return CaraAgent(JointBelief(BINARY, np.array([pr, 1.0 - pr])), c)


def _single_economy(prs, cs) -> Economy:
    return Economy(tuple(_binary_agent(p, c) for p, c in zip(prs, cs)), (EVENT_A,))


def _disjoint_economy(beliefs, cs) -> Economy:
    agents = tuple(CaraAgent(JointBelief(TRIPLE, np.array([a, b, 1.0 - a - b])), c) for (a, b), c in zip(beliefs, cs))
    return Economy(agents, (TRIPLE.event(["A"]), TRIPLE.event(["B"])))


def _draw_single_economy(rng, min_agents: int = 1):
    n = int(rng.integers(min_agents, 11))
    return rng.uniform(0.02, 0.98, n), rng.uniform(0.25, 4.0, n)


def _draw_disjoint_economy(rng):
    n = int(rng.integers(2, 6))
    beliefs = [tuple(rng.dirichlet(np.ones(3))[:2] * 0.94 + 0.02) for _ in range(n)]
    return beliefs, rng.uniform(0.25, 4.0, n)


def _zero_sum_gap(economy: Economy, res: EquilibriumResult) -> float:
    G = economy.securities(res.prices).payoff_matrix
    return float(np.max(np.abs(G @ res.demands.sum(axis=0))))


# --- criteria ----------------------------------------------------------------

def criterion_1(rng, quick):
    """Single-security closed form against direct maximization."""
    n = _scaled(500, quick)
    worst = 0.0
    for _ in range(n):
        pr, p = rng.uniform(0.02, 0.98, 2)
        c = rng.uniform(0.25, 4.0)
        worst = max(worst, abs(demand_single(pr, c, p) - demand_single_numeric(pr, c, p)))
    return worst, 1e-6, f"{n} draws, max |closed - grid| = {worst:.2e}", {}


def criterion_2(rng, quick, sink):
    """Pooled price equals the market-clearing root, and the numeric solver finds it."""
    n = _scaled(200, quick)
    worst_closed = worst_numeric = 0.0
    for _ in range(n):
        prs, cs = _draw_single_economy(rng)
        closed = equilibrium_single(prs, cs)
        worst_closed = max(worst_closed, abs(closed - equilibrium_single_bisection(prs, cs)))
        eco = _single_economy(prs, cs)
        res = solve_equilibrium_numeric(eco)
        sink.append((eco, res))
        worst_numeric = max(worst_numeric, abs(res.prices[0] - closed))
    passed = worst_closed <= 1e-10 and worst_numeric <= 1e-6
    detail = f"{n} economies, closed vs bisection {worst_closed:.2e} (tol 1e-10), numeric vs closed {worst_numeric:.2e} (tol 1e-6)"
    return max(worst_closed / 1e-10, worst_numeric / 1e-6), 1.0, detail, {"passed": passed}


def criterion_3(rng, quick, sink):
    """Disjoint-pair closed form against the numeric equilibrium."""
    n = _scaled(100, quick)
    worst = 0.0
    for _ in range(n):
        beliefs, cs = _draw_disjoint_economy(rng)
        eco = _disjoint_economy(beliefs, cs)
        res = solve_equilibrium_numeric(eco, EquilibriumConfig(multistart=0))
        sink.append((eco, res))
        worst = max(worst, float(np.max(np.abs(res.prices - equilibrium_disjoint_pair(beliefs, cs)))))
    return worst, 1e-6, f"{n} economies, max price deviation {worst:.2e}", {}


def _prop1(rng):
    pr, p = rng.uniform(0.01, 0.99, 2)
    c = rng.uniform(0.1, 10.0)
    x = demand_single(pr, c, p)
    ok = np.sign(x) == np.sign(pr - p) and demand_single(pr, c, pr) == 0.0
    return 0.0 if ok else 1.0


def _prop2(rng):
    a, b = rng.uniform(0.05, 0.95, 2)
    pa, pb = rng.uniform(0.05, 0.95, 2)
    c = rng.uniform(0.25, 4.0)
    agent = CaraAgent(JointBelief.product(a, b), c)
    sec = SecuritySet((agent.space.event(["AB", "A~B"]), agent.space.event(["AB", "~AB"])), (pa, pb))
    sol = demand_pair_fixed_point(agent, sec)
    return float(np.max(np.abs(sol.bundle - [demand_single(a, c, pa), demand_single(b, c, pb)])))


def _prop3(rng):
    # a correlated belief with a clear gap between Pr(A|B) and Pr(A|~B)
    while True:
        mass = rng.dirichlet(np.ones(4)) * 0.96 + 0.01
        a_given_b = mass[0] / (mass[0] + mass[2])
        a_given_nb = mass[1] / (mass[1] + mass[3])
        if abs(a_given_b - a_given_nb) > 0.02:
            break
    agent = CaraAgent(JointBelief(PAIR, mass), rng.uniform(0.25, 4.0))
    sec = SecuritySet((PAIR_A, PAIR_B), rng.uniform(0.1, 0.9, 2))
    b1, b2 = np.sort(rng.uniform(-3.0, 3.0, 2))
    if b2 - b1 < 0.05:
        b2 = b1 + 0.05
    x1 = best_response(agent, sec, 0, [0.0, b1])
    x2 = best_response(agent, sec, 0, [0.0, b2])
    increasing = x2 > x1
    return 0.0 if increasing == (a_given_b < a_given_nb) else 1.0


def _prop4(rng):
    pr, p = rng.uniform(0.05, 0.95, 2)
    c = rng.uniform(0.25, 4.0)
    sec = SecuritySet((EVENT_A, EVENT_A), (p, p))
    sol = demand_general(_binary_agent(pr, c), sec)
    return abs(sol.bundle.sum() - demand_single(pr, c, p))


def _prop5(rng):
    pr, p = rng.uniform(0.05, 0.95, 2)
    c = rng.uniform(0.25, 4.0)
    sec = SecuritySet((EVENT_A, EVENT_A.complement()), (p, 1.0 - p))
    sol = demand_general(_binary_agent(pr, c), sec)
    return abs(sol.bundle[0] - sol.bundle[1] - demand_single(pr, c, p))


PROPOSITIONS: dict[str, tuple[Callable, float]] = {
    "sign law": (_prop1, 0.0),
    "separability": (_prop2, 1e-8),
    "correlation direction": (_prop3, 0.0),
    "duplicate events": (_prop4, 1e-8),
    "complementary events": (_prop5, 1e-8),
}


def criterion_4(rng, quick):
    """Demand propositions on randomized instances."""
    n = _scaled(1000, quick)
    failures = {}
    for name, (check, tol) in PROPOSITIONS.items():
        failures[name] = sum(check(rng) > tol for _ in range(n))
    total = sum(failures.values())
    detail = f"{n} instances each, failures " + ", ".join(f"{k}={v}" for k, v in failures.items())
    return float(total), 0.0, detail, {}


def criterion_5(rng, quick):
    """Representative agent reproduces aggregate demand at arbitrary prices."""
    n = _scaled(100, quick)
    worst = 0.0
    c_ok = True
    for _ in range(n):
        # with one agent the aggregate c equals its own, so "strictly below" needs two
        prs, cs = _draw_single_economy(rng, min_agents=2)
        sup = make_super_agent(prs, cs)
        c_ok &= bool(np.all(sup.risk_aversion < cs))
        p = rng.uniform(0.05, 0.95)
        total = math.fsum(demand_single(pr, c, p) for pr, c in zip(prs, cs))
        worst = max(worst, abs(sup.demand(p) - total))
    return worst, 1e-9, f"{n} prices, max demand gap {worst:.2e}, aggregate c below all: {c_ok}", {"passed": c_ok and worst <= 1e-9}


def _bullets(rng) -> dict[str, bool]:
    n = int(rng.integers(2, 11))
    prs = rng.uniform(0.02, 0.98, n)
    cs = rng.uniform(0.1, 10.0, n)
    p = equilibrium_single(prs, cs)
    out = {"bounds": prs.min() - 1e-15 <= p <= prs.max() + 1e-15}
    k = rng.uniform(0.02, 0.98)
    out["unanimity"] = abs(equilibrium_single(np.full(n, k), cs) - k) <= 1e-12
    i = int(rng.integers(n))
    raised = prs.copy()
    raised[i] = prs[i] + rng.uniform(0.01, 0.99 - prs[i]) if prs[i] < 0.98 else prs[i]
    out["monotonicity"] = raised[i] == prs[i] or equilibrium_single(raised, cs) > p
    confident = cs.copy()
    confident[i] = 1e-6
    out["confidence limit"] = abs(equilibrium_single(prs, confident) - prs[i]) <= CONFIDENCE_TOL
    out["scale invariance"] = abs(equilibrium_single(prs, cs * rng.uniform(0.01, 100.0)) - p) <= 1e-12
    out["complement symmetry"] = abs(equilibrium_single(1.0 - prs, cs) - (1.0 - p)) <= 1e-12
    return out


def criterion_6(rng, quick):
    """Equilibrium price properties (a)-(f)."""
    n = _scaled(1000, quick)
    failures: dict[str, int] = {}
    for _ in range(n):
        for name, ok in _bullets(rng).items():
            failures[name] = failures.get(name, 0) + (not ok)
    total = sum(failures.values())
    return float(total), 0.0, f"{n} instances, failures " + ", ".join(f"{k}={v}" for k, v in failures.items()), {}


def criterion_7(rng, quick):
    """Figure 1: surface maximum at the origin, fixed point satisfies first-order conditions."""
    from .runner import surface_grid

    sc = _fixture("figure1")
    grid = surface_grid(sc)
    sol = demand_pair_fixed_point(sc.agents[0], sc.securities())
    passed = grid.argmax == (0.0, 0.0) and sol.gradient_norm <= 1e-10
    detail = f"grid argmax {grid.argmax}, fixed-point bundle {tuple(float(v) for v in sol.bundle)}, gradient {sol.gradient_norm:.1e}"
    return sol.gradient_norm, 1e-10, detail, {"passed": passed}


def criterion_8(rng, quick):
    """Figure 2: ridge along xA + xB = 0; exact duplicate encoding obeys the identity."""
    from .runner import surface_grid

    grid = surface_grid(_fixture("figure2"))
    ridge_gap = grid.ridge["max_abs_sum"] if grid.ridge else math.inf
    on_line = grid.ridge is not None and grid.ridge["coefficients"] == [1.0, 1.0]
    dup = _fixture("figure2_duplicate")
    sol = demand_general(dup.agents[0], dup.securities())
    pr = dup.agents[0].belief.mass[0]
    ident = abs(sol.bundle.sum() - demand_single(pr, 1.0, dup.prices[0]))
    passed = on_line and ridge_gap <= 1e-3 and ident <= 1e-8
    detail = f"ridge {grid.ridge['equation'] if grid.ridge else None}, max |xA+xB| on ridge {ridge_gap:.1e}, duplicate identity gap {ident:.1e}"
    return ridge_gap, 1e-3, detail, {"passed": passed}


def criterion_9(rng, quick):
    """Figure 3: inconsistent prices, sell A and buy B, solvers refuse with exit code 3."""
    from .cli import main

    sc = _fixture("figure3_check")
    verdict = check_consistency(sc.securities())
    d = verdict.direction
    proportional = d is not None and d[0] < 0 and abs(d[0] + d[1]) <= 1e-12
    refused = 0
    for solver in (demand_general, demand_pair_fixed_point):
        try:
            solver(sc.agents[0], sc.securities())
        except ArbitrageError:
            refused += 1
    path = resources.files("beliefmarket").joinpath("fixtures", "figure3_demand.json")
    with resources.as_file(path) as p:
        code = main(["run", str(p), "--quiet"])
    passed = (not verdict.consistent) and proportional and refused == 2 and code == 3
    detail = f"{verdict.status}, direction {None if d is None else tuple(float(v) for v in d)}, solvers refused {refused}/2, exit code {code}"
    return float(not passed), 0.0, detail, {"passed": passed}


def criterion_10(rng, quick):
    """Unnormalized pool and disagreement for beliefs 0.9 and 0.4."""
    w = WeightVector.uniform(2)
    total = logop_unnormalized([0.9, 0.4], w) + logop_unnormalized([0.1, 0.6], w)
    dis = disagreement([0.9, 0.4], w)
    err = max(abs(total - (0.6 + math.sqrt(0.06))), abs(dis - 0.155051))
    passed = total < 1 and err <= 1e-6
    return err, 1e-6, f"unnormalized sum {total:.6f} < 1, disagreement {dis:.6f}", {"passed": passed}


def criterion_11(rng, quick):
    """Analytic utility gradient against central differences."""
    n = _scaled(100, quick)
    worst = 0.0
    for _ in range(n):
        size = int(rng.integers(2, 9))
        space = SampleSpace(tuple(f"w{k}" for k in range(size)))
        m = int(rng.integers(1, 4))
        events = []
        while len(events) < m:
            mask = rng.random(size) < 0.5
            if 0 < mask.sum() < size:
                events.append(space.event([f"w{k}" for k in np.flatnonzero(mask)]))
        agent = CaraAgent(JointBelief(space, rng.dirichlet(np.ones(size))), rng.uniform(0.25, 4.0))
        sec = SecuritySet(tuple(events), rng.uniform(0.05, 0.95, m))
        x = rng.uniform(-2.0, 2.0, m)
        g = utility_gradient(agent, sec, x)
        fd = central_difference(lambda v: expected_utility(agent, sec, v), x)
        worst = max(worst, float(np.max(np.abs(g - fd)) / max(np.max(np.abs(g)), 1e-300)))
    return worst, 1e-6, f"{n} triples, max relative error {worst:.2e}", {}


def criterion_12(rng, quick, sink):
    """Every computed equilibrium clears atom by atom."""
    n = _scaled(20, quick)
    for _ in range(n):
        size = int(rng.integers(3, 9))
        space = SampleSpace(tuple(f"w{k}" for k in range(size)))
        m = int(rng.integers(1, 4))
        events = []
        while len(events) < m:
            mask = rng.random(size) < 0.5
            if 0 < mask.sum() < size:
                events.append(space.event([f"w{k}" for k in np.flatnonzero(mask)]))
        agents = tuple(CaraAgent(JointBelief(space, rng.dirichlet(np.ones(size)) * 0.9 + 0.1 / size), rng.uniform(0.5, 2.0))
                       for _ in range(int(rng.integers(2, 5))))
        eco = Economy(agents, tuple(events))
        sink.append((eco, solve_equilibrium_numeric(eco, EquilibriumConfig(multistart=0))))
    worst = max(_zero_sum_gap(eco, res) for eco, res in sink)
    return worst, 1e-8, f"{len(sink)} equilibria, max per-atom net payoff {worst:.2e}", {}


CRITERIA = {
    1: ("single-security demand vs numeric oracle", criterion_1),
    2: ("pooled price equals market clearing", criterion_2),
    3: ("disjoint-pair closed form vs numeric", criterion_3),
    4: ("demand propositions", criterion_4),
    5: ("representative agent", criterion_5),
    6: ("equilibrium price properties", criterion_6),
    7: ("Figure 1 surface and fixed point", criterion_7),
    8: ("Figure 2 ridge and duplicate identity", criterion_8),
    9: ("Figure 3 arbitrage", criterion_9),
    10: ("unnormalized pool and disagreement", criterion_10),
    11: ("utility gradient vs finite differences", criterion_11),
    12: ("zero-sum clearing", criterion_12),
}

_USES_SINK = {2, 3, 12}


def run_criterion(cid: int, seed: int = 0, quick: bool = False, sink: list | None = None) -> CriterionResult:
    name, fn = CRITERIA[cid]
    rng = np.random.default_rng([seed, cid])
    start = time.perf_counter()
    if cid in _USES_SINK:
        value, tol, detail, extra = fn(rng, quick, [] if sink is None else sink)
    else:
        value, tol, detail, extra = fn(rng, quick)
    passed = extra.get("passed", value <= tol)
    return CriterionResult(cid, name, bool(passed), float(value), float(tol), detail, time.perf_counter() - start)


def run_suite(seed: int = 0, quick: bool = False, only=None) -> list[CriterionResult]:
    """Run the selected criteria in order; criterion 12 also audits equilibria from 2 and 3."""
    ids = sorted(CRITERIA) if only is None else sorted(int(i) for i in only)
    sink: list = []
    return [run_criterion(cid, seed, quick, sink) for cid in ids]


def suite_report(results: list[CriterionResult], seed: int = 0):
    from .runner import Report

    machine = {
        "seed": seed,
        "passed": all(r.passed for r in results),
        "criteria": [
            {"id": r.id, "name": r.name, "passed": r.passed, "value": r.value, "tol": r.tol, "detail": r.detail}
            for r in results
        ],
    }
    human = [r.line() for r in results]
    human.append(f"{sum(r.passed for r in results)}/{len(results)} criteria passed (seed {seed})")
    return Report(machine, human)
