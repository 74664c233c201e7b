from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import linprog

from beliefmarket.simplex import solve


def test_feasible_point_satisfies_constraints():
    A = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 0.5])
    res = solve(A, b)
    assert res.status == "optimal"
    assert res.x.min() >= 0
    np.testing.assert_allclose(A @ res.x, b, atol=1e-12)


def test_infeasible_returns_farkas_vector():
    # x1 + x2 = 1 and x1 + x2 = 2 cannot both hold
    A = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    res = solve(A, b)
    assert res.status == "infeasible"
    y = res.dual
    assert np.all(A.T @ y <= 1e-12)
    assert b @ y > 0


def test_negative_right_hand_side():
    A = np.array([[1.0, -1.0]])
    res = solve(A, np.array([-2.0]))
    assert res.status == "optimal"
    np.testing.assert_allclose(A @ res.x, [-2.0], atol=1e-12)


def test_redundant_rows():
    A = np.array([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [1.0, 0.0, 0.0]])
    b = np.array([1.0, 2.0, 0.25])
    res = solve(A, b)
    assert res.status == "optimal"
    np.testing.assert_allclose(A @ res.x, b, atol=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_optimum_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    r, k = int(rng.integers(2, 6)), int(rng.integers(4, 10))
    A = rng.normal(size=(r, k))
    x0 = rng.uniform(0, 1, k)
    b = A @ x0
    c = rng.uniform(0.1, 2.0, k)  # positive costs keep the problem bounded
    ours = solve(A, b, c)
    ref = linprog(c, A_eq=A, b_eq=b, bounds=[(0, None)] * k, method="highs")
    assert ours.status == "optimal" and ref.status == 0
    assert abs(ours.objective - ref.fun) <= 1e-8 * max(1.0, abs(ref.fun))
    np.testing.assert_allclose(A @ ours.x, b, atol=1e-9)


@pytest.mark.parametrize("seed", range(40))
def test_feasibility_matches_scipy(seed):
    rng = np.random.default_rng(100 + seed)
    r, k = int(rng.integers(2, 5)), int(rng.integers(2, 7))
    A = rng.integers(-2, 3, size=(r, k)).astype(float)
    b = rng.integers(-3, 4, size=r).astype(float)
    ours = solve(A, b)
    ref = linprog(np.zeros(k), A_eq=A, b_eq=b, bounds=[(0, None)] * k, method="highs")
    assert (ours.status == "optimal") == (ref.status == 0)
    if ours.status == "infeasible":
        assert np.all(A.T @ ours.dual <= 1e-9) and b @ ours.dual > 1e-9
