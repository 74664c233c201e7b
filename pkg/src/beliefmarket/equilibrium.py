"""Competitive equilibrium of a market of CARA agents.

Closed forms cover one security and two disjoint securities; everything
else goes through ``solve_equilibrium_numeric``, which adjusts prices until
summed demand vanishes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agent import CaraAgent, DemandSolution, SolverConfig, demand_general, demand_single
from .errors import ArbitrageError, DomainError, SolverError
from .event_space import Event, SecuritySet, _same_space, check_consistency, event_probability
from .pooling import logop_categorical, logop_normalized, risk_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Economy:
    agents: tuple[CaraAgent, ...]
    events: tuple[Event, ...]

    def __post_init__(self):
        agents = tuple(self.agents)
        events = tuple(self.events)
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "events", events)
        if not agents:
            raise DomainError("an economy needs at least one agent")
        if not events:
            raise DomainError("an economy needs at least one security")
        space = agents[0].space
        for a in agents[1:]:
            _same_space(space, a.space)
        for ev in events:
            _same_space(space, ev.space)

    @property
    def space(self):
        return self.agents[0].space

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def m(self) -> int:
        return len(self.events)

    def securities(self, prices: Sequence[float]) -> SecuritySet:
        return SecuritySet(self.events, prices)

    def belief_prices(self, agent_index: int) -> np.ndarray:
        belief = self.agents[agent_index].belief
        return np.array([event_probability(belief, ev) for ev in self.events])

    def mixture_prices(self, weights: Sequence[float] | None = None) -> np.ndarray:
        """Event probabilities under a mixture of agent beliefs (equal weights by default)."""
        if weights is None:
            weights = np.full(self.n_agents, 1.0 / self.n_agents)
        mass = np.asarray(weights, dtype=float) @ np.array([a.belief.mass for a in self.agents])
        return np.array([math.fsum(mass[sorted(ev.members)]) for ev in self.events])


@dataclass(frozen=True)
class EquilibriumConfig:
    tol_clear: float = 1e-7
    tol_polish: float = 1e-13
    price_floor: float = 1e-6
    fd_step: float = 1e-6
    newton_switch: float = 1e-2
    max_iter: int = 500
    multistart: int = 5
    seed: int = 0
    distinct_tol: float = 1e-6
    agent: SolverConfig = field(default_factory=SolverConfig)


@dataclass(frozen=True)
class EquilibriumTrace:
    iterations: int
    evaluations: int
    history: tuple[tuple[int, str, float], ...] = ()
    tags: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    prices: np.ndarray
    demands: np.ndarray  # N x m
    excess_norm: float
    method: str  # "ClosedForm" | "Numeric"
    trace: EquilibriumTrace
    agent_gradient_norms: np.ndarray | None = None
    alternatives: tuple[np.ndarray, ...] = ()

    @property
    def excess(self) -> np.ndarray:
        return self.demands.sum(axis=0)


@dataclass(frozen=True)
class SuperAgent:
    belief_scalar: float
    risk_aversion: float

    def demand(self, price: float) -> float:
        return demand_single(self.belief_scalar, self.risk_aversion, price)


def _agent_demands(economy: Economy, securities: SecuritySet, config: SolverConfig) -> list[DemandSolution]:
    out = []
    for i, agent in enumerate(economy.agents):
        try:
            out.append(demand_general(agent, securities, config, check=False))
        except SolverError as exc:
            raise SolverError(f"agent {i}: {exc}", trace=exc.trace, best=exc.best, residual=exc.residual) from exc
    return out


def excess_demand(economy: Economy, prices: Sequence[float], config: EquilibriumConfig = EquilibriumConfig()) -> np.ndarray:
    """Summed optimal bundles at ``prices``; zero exactly at equilibrium."""
    securities = economy.securities(prices)
    verdict = check_consistency(securities)
    if not verdict.consistent:
        raise ArbitrageError("excess demand is unbounded at inconsistent prices",
                             direction=verdict.direction, verdict=verdict)
    sols = _agent_demands(economy, securities, config.agent)
    return np.sum([s.bundle for s in sols], axis=0)


def equilibrium_single(beliefs: Sequence[float], cs: Sequence[float]) -> float:
    """Clearing price of one security: the normalized log pool with risk weights."""
    return logop_normalized(beliefs, risk_weights(cs))


def equilibrium_disjoint_pair(beliefs: Sequence[tuple[float, float]], cs: Sequence[float]) -> tuple[float, float]:
    """Clearing prices of two mutually exclusive, non-exhaustive securities."""
    b = np.asarray(beliefs, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2:
        raise DomainError("beliefs must be a list of (pr_a, pr_b) pairs")
    if not np.all((b > 0) & (b < 1)):
        raise DomainError("event probabilities must lie strictly inside (0, 1)")
    rest = 1.0 - b[:, 0] - b[:, 1]
    if not np.all(rest > 0):
        raise DomainError("each agent needs pr_a + pr_b < 1")
    pooled = logop_categorical(np.column_stack([b, rest]), risk_weights(cs))
    return float(pooled[0]), float(pooled[1])


def make_super_agent(beliefs: Sequence[float], cs: Sequence[float]) -> SuperAgent:
    c = np.asarray(cs, dtype=float)
    risk_weights(c)  # validates
    return SuperAgent(equilibrium_single(beliefs, c), 1.0 / math.fsum(1.0 / c))


def closed_form_prices(economy: Economy) -> np.ndarray | None:
    """Closed-form equilibrium when the security structure has one; else None."""
    cs = [a.risk_aversion for a in economy.agents]
    if economy.m == 1:
        beliefs = [economy.belief_prices(i)[0] for i in range(economy.n_agents)]
        return np.array([equilibrium_single(beliefs, cs)])
    if economy.m == 2:
        a, b = economy.events
        if a.isdisjoint(b) and len(a.members | b.members) < economy.space.size:
            beliefs = [tuple(economy.belief_prices(i)) for i in range(economy.n_agents)]
            return np.array(equilibrium_disjoint_pair(beliefs, cs))
    return None


def _price_directions(economy: Economy) -> np.ndarray:
    """Orthonormal basis (m x r) of directions along which consistent prices can move."""
    sigs, _, _ = economy.securities(np.full(economy.m, 0.5)).signature_classes
    diffs = sigs[1:] - sigs[0]
    _, s, vt = np.linalg.svd(diffs, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300))) if s.size else 0
    return vt[:rank].T


class _Market:
    """Excess-demand oracle with evaluation bookkeeping for one solve.

    Besides excess demand it returns ``phi = -sum_i CE_i(p)``. By the envelope
    theorem the price gradient of agent i's optimal ``log(-U)/c_i`` is its
    demand, so excess demand is the gradient of ``phi``; ``phi`` is concave,
    which makes it the merit function for the price-adjustment steps.
    """

    def __init__(self, economy: Economy, config: EquilibriumConfig):
        self.economy = economy
        self.config = config
        self.evaluations = 0
        lo = config.price_floor
        self.lo, self.hi = lo, 1.0 - lo

    def __call__(self, p: np.ndarray):
        """(excess, phi, solutions), or None when p is outside the consistent region."""
        if np.any(p < self.lo) or np.any(p > self.hi):
            return None
        securities = self.economy.securities(p)
        if not check_consistency(securities).consistent:
            return None
        self.evaluations += 1
        sols = _agent_demands(self.economy, securities, self.config.agent)
        z = np.zeros(self.economy.m)
        for s in sols:  # fixed agent order keeps the sum bitwise reproducible
            z = z + s.bundle
        phi = -math.fsum(s.certainty_equivalent for s in sols)
        return z, phi, sols


def _fd_jacobian(market: _Market, p: np.ndarray, z: np.ndarray, D: np.ndarray) -> np.ndarray | None:
    h = market.config.fd_step * max(float(p.min()), market.config.price_floor)
    J = np.empty((p.size, D.shape[1]))
    for j in range(D.shape[1]):
        fwd = market(p + h * D[:, j])
        if fwd is not None:
            J[:, j] = (fwd[0] - z) / h
            continue
        bwd = market(p - h * D[:, j])
        if bwd is None:
            return None
        J[:, j] = (z - bwd[0]) / h
    return J


def _solve_from(market: _Market, p0: np.ndarray, D: np.ndarray, eta0: float):
    cfg = market.config
    p = p0.copy()
    state = market(p)
    if state is None:
        raise DomainError("starting prices are inconsistent")
    z, phi, sols = state
    norm = float(np.max(np.abs(z)))
    eta = eta0
    history = [(0, "start", norm)]
    it = 0
    while it < cfg.max_iter and norm > cfg.tol_polish:
        it += 1
        moved = False
        if norm < cfg.newton_switch and D.shape[1]:
            J = _fd_jacobian(market, p, z, D)
            if J is not None:
                step = D @ np.linalg.lstsq(J, -z, rcond=None)[0]
                s = 1.0
                for _ in range(40):
                    trial = market(p + s * step)
                    if trial is not None and float(np.max(np.abs(trial[0]))) < norm:
                        p = p + s * step
                        z, phi, sols = trial
                        norm = float(np.max(np.abs(z)))
                        moved = True
                        history.append((it, "newton", norm))
                        break
                    s *= 0.5
            if not moved and norm <= cfg.tol_clear:
                break  # at the noise floor
        if not moved:
            # ascent on phi along the projected, p(1-p)-scaled excess demand
            direction = D @ (D.T @ (p * (1.0 - p) * z))
            gain = float(z @ direction)
            while eta > 1e-16:
                cand = np.clip(p + eta * direction, market.lo, market.hi)
                trial = market(cand)
                if trial is not None and trial[1] >= phi + 1e-4 * eta * gain:
                    p = cand
                    z, phi, sols = trial
                    norm = float(np.max(np.abs(z)))
                    eta *= 1.5
                    moved = True
                    history.append((it, "tatonnement", norm))
                    break
                eta *= 0.5
        if not moved:
            history.append((it, "stalled", norm))
            break
    return p, z, sols, norm, it, history


def solve_equilibrium_numeric(economy: Economy, config: EquilibriumConfig = EquilibriumConfig()) -> EquilibriumResult:
    """Find clearing prices by damped tatonnement, then finite-difference Newton.

    Starts from the equal-weight mixture of beliefs, which is always an
    interior consistent price vector. Extra starts from random mixtures
    report any further equilibria in ``alternatives``; uniqueness is never
    assumed.
    """
    m = economy.m
    if economy.n_agents == 1:
        p = economy.belief_prices(0)
        sol = demand_general(economy.agents[0], economy.securities(p), config.agent)
        return EquilibriumResult(p, sol.bundle[None, :].copy(), float(np.max(np.abs(sol.bundle))), "Numeric",
                                 EquilibriumTrace(0, 1, ((0, "single-agent", 0.0),), ("single-agent",)),
                                 np.array([sol.gradient_norm]))

    market = _Market(economy, config)
    D = _price_directions(economy)
    inv_c = math.fsum(1.0 / a.risk_aversion for a in economy.agents)
    eta0 = 1.0 / inv_c
    p0 = economy.mixture_prices()
    p, z, sols, norm, it, history = _solve_from(market, p0, D, eta0)
    if norm > config.tol_clear:
        raise SolverError(
            f"no clearing prices found: excess demand {norm:.3g} after {it} iterations",
            trace=EquilibriumTrace(it, market.evaluations, tuple(history)), best=p, residual=norm,
        )

    alternatives: list[np.ndarray] = []
    tags: list[str] = []
    if config.multistart > 0 and m > 1:
        rng = np.random.default_rng(config.seed)
        for _ in range(config.multistart):
            start = economy.mixture_prices(rng.dirichlet(np.ones(economy.n_agents)))
            try:
                q, _, _, qnorm, _, _ = _solve_from(market, start, D, eta0)
            except (SolverError, DomainError):
                continue
            if qnorm <= config.tol_clear and np.max(np.abs(q - p)) > config.distinct_tol:
                if all(np.max(np.abs(q - a)) > config.distinct_tol for a in alternatives):
                    alternatives.append(q)
        if alternatives:
            tags.append("multiple-equilibria")
            log.warning("found %d additional equilibria", len(alternatives))

    demands = np.array([s.bundle for s in sols])
    grads = np.array([s.gradient_norm for s in sols])
    return EquilibriumResult(
        prices=p,
        demands=demands,
        excess_norm=float(np.max(np.abs(demands.sum(axis=0)))),
        method="Numeric",
        trace=EquilibriumTrace(it, market.evaluations, tuple(history), tuple(tags)),
        agent_gradient_norms=grads,
        alternatives=tuple(alternatives),
    )


def closed_form_result(economy: Economy, config: EquilibriumConfig = EquilibriumConfig()) -> EquilibriumResult | None:
    """Closed-form prices with the demands they induce, or None if no closed form applies."""
    p = closed_form_prices(economy)
    if p is None:
        return None
    sols = _agent_demands(economy, economy.securities(p), config.agent)
    demands = np.array([s.bundle for s in sols])
    return EquilibriumResult(p, demands, float(np.max(np.abs(demands.sum(axis=0)))), "ClosedForm",
                             EquilibriumTrace(0, 1), np.array([s.gradient_norm for s in sols]))
