"""Acceptance criteria 1-12 at their stated tolerances, one line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the pass/fail lines.
"""

from __future__ import annotations

import pytest

from beliefmarket.verify import CRITERIA, run_criterion

# criterion 12 audits equilibria gathered while running 2 and 3
_SHARED: list = []
_RESULTS: dict = {}

# stated runtime ceilings, seconds
RUNTIME = {1: 10.0, 2: 30.0}


@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(cid):
    result = run_criterion(cid, seed=0, quick=False, sink=_SHARED)
    _RESULTS[cid] = result
    print("\n" + result.line())
    assert result.passed, result.detail
    if cid in RUNTIME:
        assert result.seconds < RUNTIME[cid]


def test_summary():
    print()
    for cid in sorted(_RESULTS):
        print(_RESULTS[cid].line())
    missing = sorted(set(CRITERIA) - set(_RESULTS))
    assert not missing, f"criteria not run: {missing}"
    assert all(r.passed for r in _RESULTS.values())
