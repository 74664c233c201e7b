"""Demand of a single agent with constant absolute risk aversion.

Utility for money is ``u(y) = -exp(-c y)``. Expected utility of a bundle is
evaluated through ``log(-U)`` (a log-sum-exp), which is also the convex
function the Newton solver minimizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArbitrageError, DomainError, SolverError
from .event_space import JointBelief, SecuritySet, _same_space, check_consistency

# exp() overflows just above 709.78
LOG_OVERFLOW = 709.0


@dataclass(frozen=True)
class CaraAgent:
    belief: JointBelief
    risk_aversion: float
    name: str = ""

    def __post_init__(self):
        c = float(self.risk_aversion)
        if not (c > 0 and math.isfinite(c)):
            raise DomainError(f"risk aversion must be positive and finite, got {self.risk_aversion!r}")
        object.__setattr__(self, "risk_aversion", c)

    @property
    def space(self):
        return self.belief.space


@dataclass(frozen=True)
class SolverConfig:
    tol_grad: float = 1e-10
    tol_fixpoint: float = 1e-12
    max_iter_fixpoint: int = 10_000
    max_iter_newton: int = 200
    damping: float = 0.5
    rank_tol: float = 1e-10
    max_log_step: float = 8.0  # cap on any atom's exponent change per Newton step


@dataclass(frozen=True)
class SolverTrace:
    iterations: int
    method: str
    converged: bool
    tags: tuple[str, ...] = ()


@dataclass(frozen=True, eq=False)
class DemandSolution:
    bundle: np.ndarray
    utility: float
    certainty_equivalent: float
    gradient_norm: float
    trace: SolverTrace

    @property
    def converged(self) -> bool:
        return self.trace.converged


@dataclass
class _Collapsed:
    """Objective data with atoms merged by membership signature."""

    G: np.ndarray  # k x m payoff rows
    w: np.ndarray  # k class masses
    wsum: float
    c: float

    @classmethod
    def build(cls, agent: CaraAgent, securities: SecuritySet) -> "_Collapsed":
        _same_space(agent.space, securities.space)
        sigs, _, inverse = securities.signature_classes
        w = np.bincount(inverse, weights=agent.belief.mass, minlength=sigs.shape[0])
        G = sigs - securities.prices[None, :]
        return cls(G, w, float(np.dot(w, np.ones_like(w))), agent.risk_aversion)

    def log_neg_utility(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """log(-U(x)) and the softmax weights over classes."""
        a = -self.c * (self.G @ x)
        amax = float(a.max())
        if amax > LOG_OVERFLOW:
            raise DomainError(f"bundle too large: exponent {amax:.1f} exceeds the representable range")
        e = np.exp(a - amax)
        s = float(np.dot(self.w, e))
        lse = amax + math.log(s) - math.log(self.wsum)
        if lse > LOG_OVERFLOW:
            raise DomainError(f"bundle too large: log(-U) = {lse:.1f} exceeds the representable range")
        return lse, (self.w * e) / s

    def utility_grad(self, lse: float, pi: np.ndarray) -> np.ndarray:
        return self.c * math.exp(lse) * (self.G.T @ pi)


def _check_bundle(securities: SecuritySet, bundle) -> np.ndarray:
    x = np.asarray(bundle, dtype=float).reshape(-1)
    if x.shape != (securities.m,):
        raise DomainError(f"bundle must have length {securities.m}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise DomainError("bundle entries must be finite")
    return x


def expected_utility(agent: CaraAgent, securities: SecuritySet, bundle) -> float:
    """Sum over atoms of Pr(w) * u(payoff(bundle, w)); always negative."""
    x = _check_bundle(securities, bundle)
    lse, _ = _Collapsed.build(agent, securities).log_neg_utility(x)
    return -math.exp(lse)


def certainty_equivalent(agent: CaraAgent, securities: SecuritySet, bundle) -> float:
    x = _check_bundle(securities, bundle)
    lse, _ = _Collapsed.build(agent, securities).log_neg_utility(x)
    return -lse / agent.risk_aversion


def utility_gradient(agent: CaraAgent, securities: SecuritySet, bundle) -> np.ndarray:
    x = _check_bundle(securities, bundle)
    obj = _Collapsed.build(agent, securities)
    return obj.utility_grad(*obj.log_neg_utility(x))


def utility_hessian(agent: CaraAgent, securities: SecuritySet, bundle) -> np.ndarray:
    x = _check_bundle(securities, bundle)
    obj = _Collapsed.build(agent, securities)
    lse, pi = obj.log_neg_utility(x)
    return -(obj.c ** 2) * math.exp(lse) * (obj.G.T * pi) @ obj.G


def _require_open_unit(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie strictly inside (0, 1), got {value!r}")
    return value


def _require_positive(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"{name} must be positive, got {value!r}")
    return value


def demand_single(pr_a: float, c: float, p: float) -> float:
    """Optimal holding of one security: ``(1/c) ln((1-p) Pr(A) / (p (1-Pr(A))))``."""
    pr_a = _require_open_unit("pr_a", pr_a)
    p = _require_open_unit("price", p)
    c = _require_positive("risk aversion", c)
    # difference of log-odds: exactly zero when belief equals price
    return ((math.log(pr_a) - math.log1p(-pr_a)) - (math.log(p) - math.log1p(-p))) / c


def demand_disjoint_pair(pr_a: float, pr_b: float, c: float, p_a: float, p_b: float) -> tuple[float, float]:
    """Closed-form demand for two mutually exclusive, non-exhaustive events."""
    pr_a = _require_open_unit("pr_a", pr_a)
    pr_b = _require_open_unit("pr_b", pr_b)
    p_a = _require_open_unit("p_a", p_a)
    p_b = _require_open_unit("p_b", p_b)
    c = _require_positive("risk aversion", c)
    if p_a + p_b >= 1.0:
        raise ArbitrageError(
            f"p_a + p_b = {p_a + p_b!r} >= 1: selling both securities never loses",
            direction=np.array([-1.0, -1.0]),
        )
    rest = 1.0 - pr_a - pr_b
    if rest <= 0.0:
        raise DomainError("pr_a + pr_b must be < 1 so that 'neither' keeps positive mass")
    slack = math.log(1.0 - p_a - p_b) - math.log(rest)
    xa = (slack + math.log(pr_a) - math.log(p_a)) / c
    xb = (slack + math.log(pr_b) - math.log(p_b)) / c
    return xa, xb


def _require_consistent(securities: SecuritySet) -> None:
    verdict = check_consistency(securities)
    if not verdict.consistent:
        raise ArbitrageError(
            "prices admit arbitrage; demand is unbounded along the certificate direction",
            direction=verdict.direction, verdict=verdict,
        )


def _solution(obj: _Collapsed, x: np.ndarray, trace: SolverTrace) -> DemandSolution:
    lse, pi = obj.log_neg_utility(x)
    g = obj.utility_grad(lse, pi)
    x = x.copy()
    x[x == 0] = 0.0
    x.setflags(write=False)
    return DemandSolution(
        bundle=x,
        utility=-math.exp(lse),
        certainty_equivalent=-lse / obj.c + 0.0,  # no signed zero
        gradient_norm=float(np.max(np.abs(g))),
        trace=trace,
    )


def demand_general(
    agent: CaraAgent,
    securities: SecuritySet,
    config: SolverConfig = SolverConfig(),
    check: bool = True,
) -> DemandSolution:
    """Maximize expected utility by damped Newton from the zero bundle.

    The search runs in the row space of the payoff matrix, so when securities
    are linearly dependent (duplicate or complementary events) the optimum
    reached is the minimum-norm point of the optimal ridge.
    """
    if check:
        _require_consistent(securities)
    obj = _Collapsed.build(agent, securities)
    m = securities.m
    # basis of the row space: directions that actually change payoffs
    _, s, vt = np.linalg.svd(obj.G, full_matrices=False)
    rank = int(np.sum(s > config.rank_tol * max(s[0], 1e-300)))
    V = vt[:rank].T
    B = obj.G @ V
    tags = ("ridge",) if rank < m else ()
    c = obj.c

    z = np.zeros(rank)
    lse, pi = obj.log_neg_utility(V @ z)
    gnorm = float(np.max(np.abs(obj.utility_grad(lse, pi))))
    it = 0
    polish = 0
    while it < config.max_iter_newton:
        if gnorm <= config.tol_grad:
            polish += 1
            if polish > 2 or gnorm == 0.0:
                break
        it += 1
        Bpi = B.T @ pi
        grad = -c * Bpi
        hess = (c * c) * ((B.T * pi) @ B - np.outer(Bpi, Bpi))
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        if float(grad @ step) >= 0:
            step = -grad
        # far from the optimum the Hessian vanishes and raw steps overshoot into flat tails
        reach = c * float(np.max(np.abs(B @ step)))
        if reach > config.max_log_step:
            step = step * (config.max_log_step / reach)
        slope = float(grad @ step)
        t = 1.0
        accepted = False
        for _ in range(60):
            zn = z + t * step
            try:
                lse_n, pi_n = obj.log_neg_utility(V @ zn)
            except DomainError:
                t *= 0.5
                continue
            if lse_n <= lse + 1e-4 * t * slope:
                accepted = True
                break
            # predicted decrease below rounding noise: judge by the gradient instead
            if -t * slope < 1e-12 * max(1.0, abs(lse)):
                gn = float(np.max(np.abs(obj.utility_grad(lse_n, pi_n))))
                if gn < gnorm:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        z, lse, pi = zn, lse_n, pi_n
        gnew = float(np.max(np.abs(obj.utility_grad(lse, pi))))
        if polish and gnew >= gnorm:
            gnorm = min(gnorm, gnew)
            break
        gnorm = gnew

    x = V @ z
    converged = gnorm <= config.tol_grad
    trace = SolverTrace(it, "newton", converged, tags)
    sol = _solution(obj, x, trace)
    if not converged:
        raise SolverError(
            f"Newton stopped after {it} iterations with gradient norm {sol.gradient_norm:.3g}",
            trace=trace, best=sol, residual=sol.gradient_norm,
        )
    return sol


def _cells(agent: CaraAgent, securities: SecuritySet) -> tuple[float, float, float, float]:
    a, b = (ev.mask for ev in securities.events)
    mass = agent.belief.mass
    return tuple(math.fsum(mass[sel]) for sel in (a & b, a & ~b, ~a & b, ~a & ~b))


def _log(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


def demand_pair_fixed_point(
    agent: CaraAgent,
    securities: SecuritySet,
    config: SolverConfig = SolverConfig(),
    check: bool = True,
) -> DemandSolution:
    """Two-security demand by alternately solving each first-order condition.

    Each half-step is the closed-form best response of one holding given the
    other. Oscillating steps switch on damping; if the iteration still fails
    to settle the Newton solver takes over and the trace is tagged.
    """
    if securities.m != 2:
        raise DomainError("demand_pair_fixed_point needs exactly two securities")
    if check:
        _require_consistent(securities)
    obj = _Collapsed.build(agent, securities)
    c = agent.risk_aversion
    pa, pb = (float(v) for v in securities.prices)
    lab, labn, lanb, lanbn = (_log(v) for v in _cells(agent, securities))
    odds_a = math.log(1 - pa) - math.log(pa)
    odds_b = math.log(1 - pb) - math.log(pb)

    def best_a(xb: float) -> float:
        return (odds_a + np.logaddexp(lab - c * xb, labn) - np.logaddexp(lanb - c * xb, lanbn)) / c

    def best_b(xa: float) -> float:
        return (odds_b + np.logaddexp(lab - c * xa, lanb) - np.logaddexp(labn - c * xa, lanbn)) / c

    xa = xb = 0.0
    prev = None
    eta = 1.0
    tags: list[str] = []
    converged = False
    it = 0
    for it in range(1, config.max_iter_fixpoint + 1):
        na = xa + eta * (best_a(xb) - xa)
        nb = xb + eta * (best_b(na) - xb)
        step = (na - xa, nb - xb)
        xa, xb = float(na), float(nb)
        if max(abs(step[0]), abs(step[1])) < config.tol_fixpoint:
            converged = True
            break
        if eta == 1.0 and prev is not None and any(s * q < 0 for s, q in zip(step, prev)):
            eta = config.damping
            tags.append("damped")
        prev = step

    if converged:
        sol = _solution(obj, np.array([xa, xb]), SolverTrace(it, "fixed-point", True, tuple(tags)))
        if sol.gradient_norm <= config.tol_grad:
            return sol
        tags.append("gradient-check-failed")
    tags.append("fallback")
    try:
        sol = demand_general(agent, securities, config, check=False)
    except SolverError as exc:
        raise SolverError(f"fixed point and Newton fallback both failed: {exc}", trace=exc.trace,
                          best=exc.best, residual=exc.residual) from exc
    trace = SolverTrace(it + sol.trace.iterations, "fixed-point>newton", True, tuple(tags) + sol.trace.tags)
    return DemandSolution(sol.bundle, sol.utility, sol.certainty_equivalent, sol.gradient_norm, trace)


def best_response(
    agent: CaraAgent,
    securities: SecuritySet,
    index: int,
    bundle,
    config: SolverConfig = SolverConfig(),
) -> float:
    """Optimal holding of security ``index`` with every other holding pinned to ``bundle``."""
    x = _check_bundle(securities, bundle).copy()
    obj = _Collapsed.build(agent, securities)
    col = obj.G[:, index]
    if np.all(col >= 0) or np.all(col <= 0):
        raise ArbitrageError("this security alone is an arbitrage at its price")
    c = obj.c
    base = obj.G @ x - col * x[index]
    t = 0.0

    def f(t):
        a = -c * (base + col * t)
        amax = a.max()
        e = obj.w * np.exp(a - amax)
        return amax + math.log(e.sum()), e / e.sum()

    val, pi = f(t)
    for _ in range(config.max_iter_newton):
        mean = float(col @ pi)
        g = -c * mean
        h = c * c * (float((col * col) @ pi) - mean * mean)
        if abs(c * math.exp(val) * mean) <= config.tol_grad * 1e-2:
            break
        step = -g / h
        s = 1.0
        while s > 1e-12:
            nval, npi = f(t + s * step)
            if nval <= val + 1e-4 * s * g * step or nval <= val:
                break
            s *= 0.5
        if t + s * step == t:
            break
        t, val, pi = t + s * step, nval, npi
    return float(t)
