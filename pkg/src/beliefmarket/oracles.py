"""Brute-force reference computations used to cross-check the solvers.

Nothing here calls into the solvers it checks: utilities are evaluated from
the raw formulas, roots by bisection, optima by grid refinement, and
feasibility by enumerating vertices.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
import scipy.linalg


def cara_utility_single(pr_a: float, c: float, p: float, x):
    """Expected utility of holding x units of one security, straight from the lottery."""
    x = np.asarray(x, dtype=float)
    return -pr_a * np.exp(-c * (1.0 - p) * x) - (1.0 - pr_a) * np.exp(c * p * x)


def grid_argmax_1d(fn: Callable, lo: float, hi: float, points: int = 2001, stages: int = 8) -> float:
    """Grid search, shrinking the window around the best point, then a parabolic fit."""
    best = lo
    h = (hi - lo) / (points - 1)
    for _ in range(stages):
        xs = np.linspace(lo, hi, points)
        vals = fn(xs)
        i = int(np.argmax(vals))
        best = float(xs[i])
        h = (hi - lo) / (points - 1)
        lo, hi = best - 4 * h, best + 4 * h
        points = 81
    xs = np.array([best - h, best, best + h])
    f0, f1, f2 = (float(v) for v in fn(xs))
    denom = f0 - 2 * f1 + f2
    if denom < 0:
        best += 0.5 * h * (f0 - f2) / denom
    return best


def demand_single_numeric(pr_a: float, c: float, p: float, bound: float = 60.0) -> float:
    return grid_argmax_1d(lambda x: cara_utility_single(pr_a, c, p, x), -bound, bound)


def bisect_decreasing(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-14) -> float:
    """Root of a decreasing function bracketed by [lo, hi]."""
    flo = fn(lo)
    if flo <= 0:
        return lo
    if fn(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if fn(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _single_demand_formula(pr: float, c: float, p: float) -> float:
    return math.log((1 - p) * pr / (p * (1 - pr))) / c


def equilibrium_single_bisection(beliefs: Sequence[float], cs: Sequence[float], tol: float = 1e-14) -> float:
    """Price where summed single-security demand crosses zero."""
    lo, hi = min(beliefs), max(beliefs)
    if hi - lo == 0:
        return lo

    def total(p):
        return math.fsum(_single_demand_formula(pr, c, p) for pr, c in zip(beliefs, cs))

    return bisect_decreasing(total, lo, hi, tol)


def grid_argmax_2d(fn: Callable, bound: float = 20.0, coarse: int = 401, fine_step: float = 1e-4):
    """Two-stage grid maximization of fn(X, Y) over [-bound, bound]^2."""
    xs = np.linspace(-bound, bound, coarse)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    V = fn(X, Y)
    i, j = np.unravel_index(int(np.argmax(V)), V.shape)
    h = xs[1] - xs[0]
    cx, cy = xs[i], xs[j]
    # second stage: fine grid over one coarse cell around the winner
    half = int(math.ceil(h / fine_step))
    fx = cx + fine_step * np.arange(-half, half + 1)
    fy = cy + fine_step * np.arange(-half, half + 1)
    X, Y = np.meshgrid(fx, fy, indexing="ij")
    V = fn(X, Y)
    i, j = np.unravel_index(int(np.argmax(V)), V.shape)
    return float(fx[i]), float(fy[j]), float(V[i, j])


def cara_utility_atoms(mass: np.ndarray, incidence: np.ndarray, prices: np.ndarray, c: float, X, Y):
    """Two-security expected utility on grids X, Y, summing over atoms directly."""
    total = np.zeros(np.shape(X))
    cost = prices[0] * X + prices[1] * Y
    for w in range(mass.size):
        pay = incidence[0, w] * X + incidence[1, w] * Y - cost
        total = total - mass[w] * np.exp(-c * pay)
    return total


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return g


def measure_exists_by_vertices(incidence: np.ndarray, prices: np.ndarray, eps: float = 1e-9, tol: float = 1e-10) -> bool:
    """Is there q >= eps with incidence @ q = prices and sum(q) = 1?

    Enumerates every basis of the equality system: a feasible polytope has a
    vertex, and every vertex is a basic solution.
    """
    m, n = incidence.shape
    A = np.vstack([incidence, np.ones((1, n))]).astype(float)
    b = np.concatenate([prices, [1.0]]) - eps * A.sum(axis=1)
    rank = np.linalg.matrix_rank(A)
    _, _, piv = scipy.linalg.qr(A.T, pivoting=True)
    rows = np.sort(piv[:rank])
    Ar, br = A[rows], b[rows]
    for cols in itertools.combinations(range(n), rank):
        B = Ar[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        sol = np.linalg.solve(B, br)
        if sol.min() < -tol:
            continue
        r = np.zeros(n)
        r[list(cols)] = sol
        if np.max(np.abs(A @ r - b)) <= 1e-9:
            return True
    return False
