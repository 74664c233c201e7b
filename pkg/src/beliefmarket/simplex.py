"""Dense revised simplex for small equality-form linear programs.

Solves ``min c @ x  s.t.  A @ x = b, x >= 0`` with an explicit basis inverse
and Bland's rule, which is plenty for the handful of rows a security set
produces. Phase one always runs; when it fails the returned ``dual`` is a
Farkas vector ``y`` with ``A.T @ y <= 0`` and ``b @ y > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
REFACTOR_EVERY = 50


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None
    dual: np.ndarray | None
    objective: float
    iterations: int


class _Tableau:
    """Basis bookkeeping over the columns of ``[A | I]`` (identity = artificials)."""

    def __init__(self, A: np.ndarray, b: np.ndarray):
        self.r, self.k = A.shape
        self.A = A
        self.b = b
        self.basis = list(range(self.k, self.k + self.r))
        self.Binv = np.eye(self.r)
        self.xB = b.copy()

    def column(self, j: int) -> np.ndarray:
        if j < self.k:
            return self.A[:, j]
        e = np.zeros(self.r)
        e[j - self.k] = 1.0
        return e

    def refactor(self) -> None:
        B = np.column_stack([self.column(j) for j in self.basis])
        self.Binv = np.linalg.inv(B)
        self.xB = self.Binv @ self.b
        self.xB[np.abs(self.xB) < 1e-14] = 0.0

    def pivot(self, row: int, j: int, u: np.ndarray) -> None:
        theta = self.xB[row] / u[row]
        self.xB = self.xB - theta * u
        self.xB[row] = theta
        self.xB[np.abs(self.xB) < 1e-14] = 0.0
        piv = self.Binv[row] / u[row]
        self.Binv = self.Binv - np.outer(u, piv)
        self.Binv[row] = piv
        self.basis[row] = j

    def run(self, cost: np.ndarray, allowed: int, max_iter: int, tol: float) -> tuple[str, int]:
        """Bland-rule iterations; only columns ``< allowed`` may enter."""
        for it in range(max_iter):
            if it and it % REFACTOR_EVERY == 0:
                self.refactor()
            cB = cost[self.basis]
            y = cB @ self.Binv
            reduced = cost[:allowed] - self._price(y, allowed)
            in_basis = np.zeros(allowed, dtype=bool)
            in_basis[[j for j in self.basis if j < allowed]] = True
            candidates = np.flatnonzero((reduced < -tol) & ~in_basis)
            if candidates.size == 0:
                return "optimal", it
            j = int(candidates[0])
            u = self.Binv @ self.column(j)
            rows = np.flatnonzero(u > PIVOT_TOL)
            if rows.size == 0:
                return "unbounded", it
            ratios = self.xB[rows] / u[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-13]
            row = int(min(ties, key=lambda i: self.basis[i]))
            self.pivot(row, j, u)
        return "iteration_limit", max_iter

    def _price(self, y: np.ndarray, allowed: int) -> np.ndarray:
        out = y @ self.A[:, : min(allowed, self.k)]
        if allowed > self.k:
            out = np.concatenate([out, y[: allowed - self.k]])
        return out

    def drive_out_artificials(self) -> None:
        for row, j in enumerate(self.basis):
            if j < self.k:
                continue
            alpha = self.Binv[row] @ self.A
            cols = [c for c in np.flatnonzero(np.abs(alpha) > PIVOT_TOL) if c not in self.basis]
            if cols:
                c = int(cols[0])
                self.pivot(row, c, self.Binv @ self.A[:, c])
            # else the row is redundant; the artificial stays basic at zero


def solve(
    A: np.ndarray,
    b: np.ndarray,
    c: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int | None = None,
) -> LPResult:
    """Two-phase simplex. With ``c=None`` only feasibility is decided."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    r, k = A.shape
    if max_iter is None:
        max_iter = 50 * (r + k) + 1000
    sign = np.where(b < 0, -1.0, 1.0)
    As = A * sign[:, None]
    bs = b * sign

    tab = _Tableau(As, bs)
    phase1_cost = np.concatenate([np.zeros(k), np.ones(r)])
    status, it1 = tab.run(phase1_cost, allowed=k, max_iter=max_iter, tol=tol)
    tab.refactor()
    infeas = float(sum(tab.xB[i] for i, j in enumerate(tab.basis) if j >= k))
    scale = max(1.0, float(np.abs(bs).sum()))
    if status == "iteration_limit":
        return LPResult(status, None, None, np.nan, it1)
    if infeas > tol * scale:
        y = phase1_cost[tab.basis] @ tab.Binv
        return LPResult("infeasible", None, y * sign, infeas, it1)

    tab.drive_out_artificials()
    if c is None:
        x = np.zeros(k)
        for i, j in enumerate(tab.basis):
            if j < k:
                x[j] = max(tab.xB[i], 0.0)
        return LPResult("optimal", x, None, 0.0, it1)

    cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(r)])
    status, it2 = tab.run(cost, allowed=k, max_iter=max_iter, tol=tol)
    tab.refactor()
    x = np.zeros(k)
    for i, j in enumerate(tab.basis):
        if j < k:
            x[j] = max(tab.xB[i], 0.0)
    y = cost[tab.basis] @ tab.Binv
    return LPResult(status, x if status == "optimal" else None, y * sign, float(cost[:k] @ x), it1 + it2)
