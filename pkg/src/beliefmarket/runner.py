"""Task dispatch, surface grids, and report serialization."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import agent as agent_mod
from .equilibrium import EquilibriumConfig, closed_form_prices, solve_equilibrium_numeric
from .errors import ArbitrageError, BeliefMarketError, DomainError, ScenarioError, SolverError
from .event_space import UNIT_COMBO_CAP, check_consistency, check_unit_combinations, event_probability
from .pooling import disagreement, linear_pool, logop_normalized, logop_unnormalized, risk_weights
from .scenario import Scenario

RIDGE_TOL = 1e-9

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ARBITRAGE = 3
EXIT_SOLVER = 4


@dataclass
class Report:
    machine: dict
    human: list[str]
    surface: "SurfaceGrid | None" = None

    def to_dict(self) -> dict:
        return {"machine": self.machine, "human": self.human}

    def to_json(self) -> str:
        return dumps(self.to_dict())


# --- serialization -----------------------------------------------------------

def _plain(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _float_token(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == 0:
        return "0.0"
    token = format(x, ".17g")
    # keep whole-number reals recognizable as reals
    return token if any(ch in token for ch in ".e") else token + ".0"


def _emit(obj: Any, out: io.StringIO, indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.write(json.dumps(obj))
    elif isinstance(obj, float):
        out.write(_float_token(obj))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, str):
        out.write(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.write(f"{pad}{json.dumps(k, ensure_ascii=False)}: ")
            _emit(v, out, indent, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.write("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.write("[" + ", ".join(_float_token(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad)
            _emit(v, out, indent, level + 1)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON with every real written to 17 significant digits."""
    out = io.StringIO()
    _emit(_plain(obj), out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _fmt(x: float, digits: int = 6) -> str:
    return f"{x:.{digits}g}" if abs(x) >= 1e-4 or x == 0 else f"{x:.3e}"


def _table(header: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return out


# --- surface -----------------------------------------------------------------

@dataclass
class SurfaceGrid:
    xa: np.ndarray
    xb: np.ndarray
    utility: np.ndarray  # len(xa) x len(xb)
    argmax: tuple[float, float]
    max_utility: float
    ridge: dict | None = None
    unbounded_direction: list[float] | None = None

    def rows(self):
        for i, a in enumerate(self.xa):
            for j, b in enumerate(self.xb):
                yield float(a), float(b), float(self.utility[i, j])

    def to_csv(self) -> str:
        lines = ["xA,xB,utility"]
        lines += [f"{_float_token(a)},{_float_token(b)},{_float_token(u)}" for a, b, u in self.rows()]
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "bounds": [float(self.xa[0]), float(self.xa[-1])],
            "resolution": int(self.xa.size),
            "argmax": list(self.argmax),
            "max_utility": self.max_utility,
            "ridge": self.ridge,
            "unbounded_direction": self.unbounded_direction,
        }


def _grid_axis(lo: float, hi: float, n: int) -> np.ndarray:
    # integer steps keep 0 exactly on symmetric grids with odd n
    return lo + (hi - lo) * np.arange(n) / (n - 1)


def surface_grid(scenario: Scenario) -> SurfaceGrid:
    """Expected utility of one agent over a grid of two-security bundles."""
    if len(scenario.events) != 2:
        raise ScenarioError(f"surface needs exactly 2 securities, got {len(scenario.events)}", "securities")
    params = scenario.params
    lo, hi = (float(v) for v in params.get("bounds", (-3.0, 3.0)))
    n = int(params.get("resolution", 121))
    if not (hi > lo and n >= 3):
        raise ScenarioError("need bounds lo < hi and resolution >= 3", "params")
    ag = scenario.agents[scenario.agent_index(params.get("agent"))]
    sec = scenario.securities()
    xs = _grid_axis(lo, hi, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    G = sec.payoff_matrix
    c = ag.risk_aversion
    U = np.zeros_like(X)
    for w in range(G.shape[0]):
        U -= ag.belief.mass[w] * np.exp(-c * (G[w, 0] * X + G[w, 1] * Y))
    i, j = np.unravel_index(int(np.argmax(U)), U.shape)
    umax = float(U[i, j])
    arg = (float(xs[i]), float(xs[j]))
    grid = SurfaceGrid(xs, xs.copy(), U, arg, umax)

    on_edge = i in (0, n - 1) or j in (0, n - 1)
    if on_edge:
        scale = max(abs(arg[0]), abs(arg[1]))
        grid.unbounded_direction = [arg[0] / scale, arg[1] / scale]
        return grid

    near = np.argwhere(U >= umax - RIDGE_TOL)
    if len(near) >= 3:
        pts = np.column_stack([xs[near[:, 0]], xs[near[:, 1]]])
        centre = pts.mean(axis=0)
        _, s, vt = np.linalg.svd(pts - centre, full_matrices=False)
        normal = vt[-1]
        resid = np.abs((pts - centre) @ normal)
        h = xs[1] - xs[0]
        if s[0] > 2 * h and resid.max() <= 0.5 * h:
            normal = normal / np.max(np.abs(normal))
            if normal[np.flatnonzero(np.abs(normal) > 1e-12)[0]] < 0:
                normal = -normal
            normal = np.where(np.abs(normal - np.round(normal)) < 1e-9, np.round(normal), normal)
            offset = float(normal @ centre)
            offset = 0.0 if abs(offset) < 1e-12 else offset
            grid.ridge = {
                "coefficients": [float(normal[0]), float(normal[1])],
                "offset": offset,
                "equation": f"{_fmt(normal[0])}*xA + {_fmt(normal[1])}*xB = {_fmt(offset)}",
                "points": int(len(pts)),
                "max_abs_residual": float(resid.max()),
                "max_abs_sum": float(np.max(np.abs(pts @ normal - offset))),
            }
    return grid


# --- tasks -------------------------------------------------------------------

def _solution_dict(sol: agent_mod.DemandSolution) -> dict:
    return {
        "bundle": sol.bundle,
        "utility": sol.utility,
        "certainty_equivalent": sol.certainty_equivalent,
        "gradient_norm": sol.gradient_norm,
        "iterations": sol.trace.iterations,
        "method": sol.trace.method,
        "converged": sol.trace.converged,
        "tags": list(sol.trace.tags),
    }


def _solver_config(params: dict) -> agent_mod.SolverConfig:
    keys = {"tol_grad", "tol_fixpoint", "max_iter_fixpoint", "max_iter_newton", "damping"}
    return agent_mod.SolverConfig(**{k: params[k] for k in keys if k in params})


def _run_demand(sc: Scenario) -> Report:
    sec = sc.securities()
    cfg = _solver_config(sc.params)
    solver = sc.params.get("solver", "auto")
    if solver not in ("auto", "general", "fixed_point"):
        raise ScenarioError(f"unknown solver {solver!r}", "params.solver")
    verdict = check_consistency(sec)
    if not verdict.consistent:
        raise ArbitrageError("prices admit arbitrage; every demand solver refuses", direction=verdict.direction,
                             verdict=verdict)
    # dependent pairs form a ridge; only Newton canonicalizes to the minimum-norm point
    full_rank = sec.m == 2 and np.linalg.matrix_rank(sec.payoff_matrix) == 2
    use_pair = solver == "fixed_point" or (solver == "auto" and full_rank)
    sols = []
    for ag in sc.agents:
        if use_pair:
            sols.append(agent_mod.demand_pair_fixed_point(ag, sec, cfg, check=False))
        else:
            sols.append(agent_mod.demand_general(ag, sec, cfg, check=False))
    machine = {
        "prices": sec.prices,
        "agents": {aid: _solution_dict(s) for aid, s in zip(sc.agent_ids, sols)},
    }
    rows = [[aid] + [_fmt(v) for v in s.bundle] + [_fmt(s.utility), _fmt(s.certainty_equivalent), s.trace.method]
            for aid, s in zip(sc.agent_ids, sols)]
    human = ["Demand at fixed prices"]
    human += _table(["agent"] + list(sc.security_names) + ["utility", "cert. equiv.", "method"], rows)
    return Report(machine, human)


def _equilibrium_config(params: dict) -> EquilibriumConfig:
    keys = {"tol_clear", "max_iter", "multistart", "seed", "newton_switch", "fd_step"}
    return EquilibriumConfig(**{k: params[k] for k in keys if k in params})


def _run_equilibrium(sc: Scenario) -> Report:
    eco = sc.economy
    res = solve_equilibrium_numeric(eco, _equilibrium_config(sc.params))
    machine: dict = {
        "prices": res.prices,
        "demands": {aid: row for aid, row in zip(sc.agent_ids, res.demands)},
        "excess_norm": res.excess_norm,
        "method": res.method,
        "iterations": res.trace.iterations,
        "evaluations": res.trace.evaluations,
        "agent_gradient_norms": res.agent_gradient_norms,
        "alternatives": list(res.alternatives),
        "history": [list(h) for h in res.trace.history],
    }
    closed = closed_form_prices(eco)
    if closed is not None:
        machine["closed_form"] = {"prices": closed, "max_deviation": float(np.max(np.abs(closed - res.prices)))}
    human = [f"Equilibrium ({res.method}, {res.trace.iterations} iterations, excess {_fmt(res.excess_norm)})"]
    beliefs = [eco.belief_prices(i) for i in range(eco.n_agents)]
    rows = []
    for z, name in enumerate(sc.security_names):
        row = [name, _fmt(res.prices[z])]
        if closed is not None:
            row.append(_fmt(closed[z]))
        rows.append(row + [_fmt(b[z]) for b in beliefs])
    head = ["security", "price"] + (["closed form"] if closed is not None else []) + [f"Pr_{a}" for a in sc.agent_ids]
    human += _table(head, rows)
    human.append("")
    human += _table(["agent"] + list(sc.security_names),
                    [[aid] + [_fmt(v) for v in row] for aid, row in zip(sc.agent_ids, res.demands)])
    if res.alternatives:
        human.append(f"warning: {len(res.alternatives)} further equilibria found from other starts")
    return Report(machine, human)


def _run_pool(sc: Scenario) -> Report:
    weights = risk_weights([a.risk_aversion for a in sc.agents])
    pools = {}
    rows = []
    for z, name in enumerate(sc.security_names):
        probs = [event_probability(a.belief, sc.events[z]) for a in sc.agents]
        comp = [1.0 - v for v in probs]
        entry = {
            "agent_probabilities": probs,
            "logop_normalized": logop_normalized(probs, weights),
            "logop_unnormalized": logop_unnormalized(probs, weights),
            "logop_unnormalized_complement": logop_unnormalized(comp, weights),
            "disagreement": disagreement(probs, weights),
            "linear_pool": linear_pool(probs, weights),
        }
        pools[name] = entry
        rows.append([name, _fmt(entry["logop_normalized"]), _fmt(entry["logop_unnormalized"]),
                     _fmt(entry["logop_unnormalized_complement"]), _fmt(entry["disagreement"]),
                     _fmt(entry["linear_pool"])])
    machine = {"weights": weights.weights, "pools": pools}
    human = ["Opinion pools (weights = normalized inverse risk aversion)"]
    human += _table(["security", "LogOP", "unnorm(A)", "unnorm(not A)", "disagreement", "linear"], rows)
    return Report(machine, human)


def _verdict_dict(v) -> dict:
    return {
        "status": v.status,
        "method": v.method,
        "measure": v.measure,
        "direction": v.direction,
        "note": v.note,
    }


def _run_check(sc: Scenario) -> Report:
    sec = sc.securities()
    v = check_consistency(sec)
    machine = {"prices": sec.prices, "verdict": _verdict_dict(v), "verified": v.verify(sec)}
    human = [f"Prices are {v.status.lower()} ({v.method})"]
    if v.consistent:
        human += _table(["atom", "implied mass"], [[a, _fmt(q)] for a, q in zip(sc.space.atoms, v.measure)])
    elif v.direction is not None:
        pay = sec.payoff_matrix @ v.direction
        human.append("arbitrage portfolio: " + ", ".join(f"{n} {_fmt(d)}" for n, d in zip(sc.security_names, v.direction)))
        human += _table(["atom", "payoff"], [[a, _fmt(p)] for a, p in zip(sc.space.atoms, pay)])
    else:
        human.append(v.note)
    if sec.m <= UNIT_COMBO_CAP:
        u = check_unit_combinations(sec)
        machine["unit_combinations"] = _verdict_dict(u)
        human.append(f"unit-combination test: {u.status.lower()}"
                     + (f", violating signs {[int(s) for s in u.direction]}" if u.direction is not None else ""))
    return Report(machine, human)


def _run_surface(sc: Scenario) -> Report:
    grid = surface_grid(sc)
    machine = {"prices": sc.securities().prices, "surface": grid.summary()}
    human = [f"Utility surface, {grid.xa.size}x{grid.xb.size} grid on [{_fmt(grid.xa[0])}, {_fmt(grid.xa[-1])}]^2",
             f"grid argmax: ({_fmt(grid.argmax[0])}, {_fmt(grid.argmax[1])}), U = {_fmt(grid.max_utility, 12)}"]
    if grid.unbounded_direction is not None:
        d = grid.unbounded_direction
        human.append(f"no interior maximum: unbounded direction ({_fmt(d[0])}, {_fmt(d[1])})")
    if grid.ridge is not None:
        human.append(f"ridge of maxima: {grid.ridge['equation']} ({grid.ridge['points']} grid points)")
    return Report(machine, human, surface=grid)


def _run_verify(sc: Scenario) -> Report:
    from .verify import run_suite, suite_report

    results = run_suite(seed=int(sc.params.get("seed", 0)), quick=bool(sc.params.get("quick", False)),
                        only=sc.params.get("only"))
    return suite_report(results, seed=int(sc.params.get("seed", 0)))


_TASKS = {
    "demand": _run_demand,
    "equilibrium": _run_equilibrium,
    "pool": _run_pool,
    "check": _run_check,
    "surface": _run_surface,
    "verify": _run_verify,
}


def run(scenario: Scenario) -> Report:
    """Execute the scenario's task. Solver and arbitrage errors propagate."""
    report = _TASKS[scenario.task](scenario)
    report.machine = {"scenario": scenario.name, "task": scenario.task, "warnings": list(scenario.warnings),
                      **report.machine}
    if scenario.warnings:
        report.human = report.human + [f"warning: {w}" for w in scenario.warnings]
    return report


def error_report(exc: BaseException, scenario: Scenario | None = None) -> tuple[Report, int]:
    """Render a failure as a report plus the matching exit code."""
    info: dict = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ArbitrageError):
        code = EXIT_ARBITRAGE
        info["direction"] = exc.direction
    elif isinstance(exc, SolverError):
        code = EXIT_SOLVER
        info["residual"] = exc.residual
        if exc.trace is not None:
            info["trace"] = repr(exc.trace)
    elif isinstance(exc, (ScenarioError, DomainError)):
        code = EXIT_INVALID
        if isinstance(exc, ScenarioError):
            info["field"] = exc.field
    else:
        code = EXIT_SOLVER if isinstance(exc, BeliefMarketError) else 1
    machine = {"scenario": scenario.name if scenario else None,
               "task": scenario.task if scenario else None, "error": info}
    human = [f"error ({info['type']}): {info['message']}"]
    if info.get("direction") is not None:
        human.append("arbitrage direction: " + ", ".join(_fmt(v) for v in np.asarray(info["direction"])))
    return Report(machine, human), code
