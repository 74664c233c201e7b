"""Scenario files: JSON in, validated domain objects out.

Schema (all keys required unless noted)::

    {
      "name": "figure1",                      # optional
      "description": "...",                   # optional
      "atoms": ["AB", "A~B", "~AB", "~A~B"],
      "agents": [
        {"id": "a", "risk_aversion": 1.0,
         "belief": {"AB": 0.25, "A~B": 0.25, "~AB": 0.25, "~A~B": 0.25}}
      ],
      "securities": [
        {"name": "A", "event": ["AB", "A~B"], "price": 0.5}   # price optional
      ],
      "task": "demand" | "equilibrium" | "pool" | "check" | "surface" | "verify",
      "params": {...}                         # optional, task specific
    }

A belief may also be a list of masses in atom order. Zero masses are lifted
to the positivity floor with a warning.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .agent import CaraAgent
from .equilibrium import Economy
from .errors import DomainError, ScenarioError
from .event_space import Event, JointBelief, MassClampWarning, SampleSpace, SecuritySet

TASKS = ("demand", "equilibrium", "pool", "check", "surface", "verify")
PRICED_TASKS = ("demand", "check", "surface")


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    space: SampleSpace
    agent_ids: tuple[str, ...]
    agents: tuple[CaraAgent, ...]
    security_names: tuple[str, ...]
    events: tuple[Event, ...]
    prices: tuple[float | None, ...]
    task: str
    params: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()
    description: str = ""

    @property
    def economy(self) -> Economy:
        return Economy(self.agents, self.events)

    @property
    def has_prices(self) -> bool:
        return all(p is not None for p in self.prices)

    def securities(self) -> SecuritySet:
        if not self.has_prices:
            missing = [n for n, p in zip(self.security_names, self.prices) if p is None]
            raise ScenarioError(f"task {self.task!r} needs a price for every security; missing {missing}", "securities")
        return SecuritySet(self.events, self.prices)

    def agent_index(self, key: Any) -> int:
        if key is None:
            return 0
        if isinstance(key, int) and not isinstance(key, bool):
            if 0 <= key < len(self.agents):
                return key
            raise ScenarioError(f"agent index {key} out of range", "params.agent")
        if key in self.agent_ids:
            return self.agent_ids.index(key)
        raise ScenarioError(f"unknown agent {key!r}", "params.agent")


def _require(obj: dict, key: str, path: str):
    if not isinstance(obj, dict):
        raise ScenarioError("expected an object", path)
    if key not in obj:
        raise ScenarioError("missing required field", f"{path}.{key}" if path else key)
    return obj[key]


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", path)
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError("number must be finite", path)
    return value


def _parse_belief(raw, space: SampleSpace, path: str) -> tuple[JointBelief, list[str]]:
    if isinstance(raw, dict):
        unknown = [k for k in raw if k not in space.atoms]
        if unknown:
            raise ScenarioError(f"unknown atoms {unknown}", path)
        masses = [_number(raw.get(a, 0.0), f"{path}.{a}") for a in space.atoms]
    elif isinstance(raw, list):
        if len(raw) != space.size:
            raise ScenarioError(f"expected {space.size} masses, got {len(raw)}", path)
        masses = [_number(v, f"{path}[{i}]") for i, v in enumerate(raw)]
    else:
        raise ScenarioError("belief must be an object keyed by atom or a list of masses", path)
    if any(v < 0 for v in masses):
        raise ScenarioError("masses must be nonnegative", path)
    total = math.fsum(masses)
    if abs(total - 1.0) > 1e-9:
        raise ScenarioError(f"masses sum to {total!r}; beliefs must be normalized to 1 (tolerance 1e-9)", path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MassClampWarning)
        try:
            belief = JointBelief.from_masses(space, masses, clamp=True)
        except DomainError as exc:
            raise ScenarioError(str(exc), path) from None
    notes = [f"{path}: {w.message}" for w in caught if issubclass(w.category, MassClampWarning)]
    return belief, notes


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario; every failure names the offending field."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be a JSON object")

    atoms = _require(doc, "atoms", "")
    if not isinstance(atoms, list) or not all(isinstance(a, str) for a in atoms):
        raise ScenarioError("expected a list of atom labels", "atoms")
    try:
        space = SampleSpace(tuple(atoms))
    except DomainError as exc:
        raise ScenarioError(str(exc), "atoms") from None

    task = _require(doc, "task", "")
    if task not in TASKS:
        raise ScenarioError(f"unknown task {task!r}; expected one of {list(TASKS)}", "task")

    notes: list[str] = []
    raw_agents = _require(doc, "agents", "")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise ScenarioError("expected a non-empty list", "agents")
    ids, agents = [], []
    for i, ra in enumerate(raw_agents):
        path = f"agents[{i}]"
        aid = str(ra.get("id", i)) if isinstance(ra, dict) else str(i)
        if aid in ids:
            raise ScenarioError(f"duplicate agent id {aid!r}", f"{path}.id")
        c = _number(_require(ra, "risk_aversion", path), f"{path}.risk_aversion")
        if c <= 0:
            raise ScenarioError("risk aversion must be positive", f"{path}.risk_aversion")
        belief, bnotes = _parse_belief(_require(ra, "belief", path), space, f"{path}.belief")
        notes.extend(bnotes)
        ids.append(aid)
        agents.append(CaraAgent(belief, c, aid))

    raw_secs = _require(doc, "securities", "")
    if not isinstance(raw_secs, list) or not raw_secs:
        raise ScenarioError("expected a non-empty list", "securities")
    names, events, prices = [], [], []
    for z, rs in enumerate(raw_secs):
        path = f"securities[{z}]"
        ev = _require(rs, "event", path)
        if not isinstance(ev, list) or not all(isinstance(a, str) for a in ev):
            raise ScenarioError("expected a list of atom labels", f"{path}.event")
        missing = [a for a in ev if a not in space.atoms]
        if missing:
            raise ScenarioError(f"unknown atoms {missing}", f"{path}.event")
        try:
            events.append(space.event(ev))
        except DomainError as exc:
            raise ScenarioError(str(exc), f"{path}.event") from None
        names.append(str(rs.get("name", f"S{z}")))
        price = rs.get("price")
        if price is not None:
            price = _number(price, f"{path}.price")
            if not 0 < price < 1:
                raise ScenarioError("price must lie strictly inside (0, 1)", f"{path}.price")
        prices.append(price)

    params = doc.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError("expected an object", "params")

    scenario = Scenario(
        name=str(doc.get("name", "")),
        space=space,
        agent_ids=tuple(ids),
        agents=tuple(agents),
        security_names=tuple(names),
        events=tuple(events),
        prices=tuple(prices),
        task=task,
        params=params,
        warnings=tuple(notes),
        description=str(doc.get("description", "")),
    )
    if task in PRICED_TASKS:
        scenario.securities()
    if task == "surface" and len(events) != 2:
        raise ScenarioError(f"surface needs exactly 2 securities, got {len(events)}", "securities")
    return scenario


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def scenario_dict(space_atoms, agents, securities, task, params=None, name="") -> dict:
    """Build a scenario document programmatically (masses given as lists)."""
    return {
        "name": name,
        "atoms": list(space_atoms),
        "agents": [{"id": str(aid), "risk_aversion": float(c), "belief": [float(v) for v in np.asarray(mass)]}
                   for aid, c, mass in agents],
        "securities": [dict(name=n, event=list(ev), **({"price": float(p)} if p is not None else {}))
                       for n, ev, p in securities],
        "task": task,
        "params": params or {},
    }
