"""Sample spaces, events, beliefs, security sets, and the no-arbitrage test.

Everything here is atoms-first: an event is a set of atom indices and every
probability is a finite sum over atoms.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import simplex
from .errors import DomainError, SampleSpaceMismatch

EPS_MASS = 1e-9
EPS_MEASURE = 1e-9
TOL_NORM = 1e-9
TOL_FEAS = 1e-8
MAX_ATOMS = 2**20
MAX_SECURITIES = 64
UNIT_COMBO_CAP = 12
# Above this many distinct atom signatures the canonical-certificate LP is
# skipped and the phase-one Farkas vector is used instead.
CERT_LP_CAP = 4096


class MassClampWarning(UserWarning):
    """Zero atom masses were raised to EPS_MASS and the belief renormalized."""


@dataclass(frozen=True)
class SampleSpace:
    atoms: tuple[str, ...]

    def __post_init__(self):
        atoms = tuple(str(a) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if len(atoms) < 2:
            raise DomainError("a sample space needs at least 2 atoms")
        if len(atoms) > MAX_ATOMS:
            raise DomainError(f"at most {MAX_ATOMS} atoms are supported")
        if len(set(atoms)) != len(atoms):
            dupes = sorted({a for a in atoms if atoms.count(a) > 1})
            raise DomainError(f"duplicate atom labels: {dupes}")

    @property
    def size(self) -> int:
        return len(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def index(self, label: str) -> int:
        try:
            return self.atoms.index(label)
        except ValueError:
            raise DomainError(f"unknown atom {label!r}") from None

    def event(self, labels: Iterable[str]) -> "Event":
        return Event(self, frozenset(self.index(a) for a in labels))

    @classmethod
    def product(cls, *factors: Sequence[str]) -> "SampleSpace":
        """Cartesian product of labelled factors, e.g. ``product("A~A", "B~B")``."""
        return cls(tuple("".join(combo) for combo in itertools.product(*factors)))


@dataclass(frozen=True)
class Event:
    space: SampleSpace
    members: frozenset[int]

    def __post_init__(self):
        members = frozenset(int(i) for i in self.members)
        object.__setattr__(self, "members", members)
        n = self.space.size
        if any(i < 0 or i >= n for i in members):
            raise DomainError("event references an atom outside the sample space")
        if not members:
            raise DomainError("event must be proper: it is empty")
        if len(members) == n:
            raise DomainError("event must be proper: it equals the whole sample space")

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.space.size, dtype=bool)
        m[list(self.members)] = True
        return m

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.space.atoms[i] for i in sorted(self.members))

    def complement(self) -> "Event":
        return Event(self.space, frozenset(range(self.space.size)) - self.members)

    def __and__(self, other: "Event") -> frozenset[int]:
        _same_space(self.space, other.space)
        return self.members & other.members

    def isdisjoint(self, other: "Event") -> bool:
        _same_space(self.space, other.space)
        return not (self.members & other.members)


@dataclass(frozen=True, eq=False)
class JointBelief:
    space: SampleSpace
    mass: np.ndarray

    def __post_init__(self):
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (self.space.size,):
            raise DomainError(f"belief needs {self.space.size} masses, got shape {mass.shape}")
        if not np.all(np.isfinite(mass)):
            raise DomainError("belief masses must be finite")
        if mass.min() < EPS_MASS:
            bad = self.space.atoms[int(mass.argmin())]
            raise DomainError(f"atom {bad!r} has mass {mass.min():.3g} below the positivity floor {EPS_MASS:g}")
        total = math.fsum(mass)
        if abs(total - 1.0) > TOL_NORM:
            raise DomainError(f"belief masses sum to {total!r}, not 1 (tolerance {TOL_NORM:g})")
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_masses(cls, space: SampleSpace, masses: Sequence[float], clamp: bool = False) -> "JointBelief":
        """Build a belief, optionally lifting zero masses to EPS_MASS and renormalizing."""
        mass = np.array(masses, dtype=float)
        if clamp and mass.shape == (space.size,) and np.any(mass < EPS_MASS):
            if np.any(mass < 0):
                raise DomainError("belief masses must be nonnegative")
            total = math.fsum(mass)
            if abs(total - 1.0) > TOL_NORM:
                raise DomainError(f"belief masses sum to {total!r}, not 1 (tolerance {TOL_NORM:g})")
            low = [space.atoms[i] for i in np.flatnonzero(mass < EPS_MASS)]
            warnings.warn(f"clamped masses of atoms {low} to {EPS_MASS:g} and renormalized", MassClampWarning, stacklevel=2)
            mass = np.maximum(mass, EPS_MASS)
            mass = mass / math.fsum(mass)
            mass = np.maximum(mass, EPS_MASS)
        return cls(space, mass)

    @classmethod
    def uniform(cls, space: SampleSpace) -> "JointBelief":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def product(cls, *marginals: float) -> "JointBelief":
        """Independent binary events with the given probabilities.

        Atoms are ordered like ``SampleSpace.product``: event true before false,
        so two marginals give AB, AB̄, ĀB, ĀB̄.
        """
        labels = [(chr(ord("A") + k), "~" + chr(ord("A") + k)) for k in range(len(marginals))]
        space = SampleSpace.product(*labels)
        mass = [math.prod(pk if bit == 0 else 1.0 - pk for pk, bit in zip(marginals, bits))
                for bits in itertools.product((0, 1), repeat=len(marginals))]
        return cls(space, mass)

    def __eq__(self, other):
        if not isinstance(other, JointBelief):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.mass, other.mass)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SecuritySet:
    events: tuple[Event, ...]
    prices: np.ndarray

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        if not events:
            raise DomainError("a security set needs at least one event")
        if len(events) > MAX_SECURITIES:
            raise DomainError(f"at most {MAX_SECURITIES} securities are supported")
        space = events[0].space
        for ev in events[1:]:
            _same_space(space, ev.space)
        prices = np.array(self.prices, dtype=float).reshape(-1)
        if prices.shape != (len(events),):
            raise DomainError(f"expected {len(events)} prices, got {prices.shape[0]}")
        if not np.all((prices > 0) & (prices < 1)):
            raise DomainError("every price must lie strictly inside (0, 1)")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @property
    def space(self) -> SampleSpace:
        return self.events[0].space

    @property
    def m(self) -> int:
        return len(self.events)

    def __len__(self) -> int:
        return len(self.events)

    @cached_property
    def incidence(self) -> np.ndarray:
        """m x n 0/1 matrix, row Z marks the atoms of event Z."""
        inc = np.array([ev.mask for ev in self.events], dtype=float)
        inc.setflags(write=False)
        return inc

    @cached_property
    def payoff_matrix(self) -> np.ndarray:
        """n x m matrix G with G[w, Z] = 1{w in Z} - p_Z, so payoffs are ``G @ bundle``."""
        G = self.incidence.T - self.prices[None, :]
        G.setflags(write=False)
        return G

    @cached_property
    def signature_classes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Atoms grouped by membership row: (signatures k x m, class sizes, atom -> class)."""
        inc = self.incidence.T.astype(np.int8)
        sigs, inverse, counts = np.unique(inc, axis=0, return_inverse=True, return_counts=True)
        return sigs.astype(float), counts.astype(float), inverse.reshape(-1)

    def with_prices(self, prices: Sequence[float]) -> "SecuritySet":
        return SecuritySet(self.events, prices)

    def __eq__(self, other):
        if not isinstance(other, SecuritySet):
            return NotImplemented
        return self.events == other.events and np.array_equal(self.prices, other.prices)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ConsistencyVerdict:
    consistent: bool
    measure: np.ndarray | None = None
    direction: np.ndarray | None = None
    method: str = "measure"
    note: str = ""
    residual: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "Consistent" if self.consistent else "Inconsistent"

    def verify(self, securities: SecuritySet, tol: float = TOL_FEAS) -> bool:
        """Re-check the stored certificate against exact payoffs."""
        if self.consistent:
            if self.measure is None:
                return False
            q = self.measure
            return bool(np.all(q > 0) and abs(q.sum() - 1) <= tol
                        and np.max(np.abs(securities.incidence @ q - securities.prices)) <= tol)
        if self.direction is None:
            return False
        pay = securities.payoff_matrix @ self.direction
        if self.method == "unit combinations":
            return bool(pay.min() >= -tol)
        return bool(pay.min() >= -tol and pay.max() > tol)


def _same_space(a: SampleSpace, b: SampleSpace) -> None:
    if a is not b and a != b:
        raise SampleSpaceMismatch("objects are defined over different sample spaces")


def event_probability(belief: JointBelief, event: Event) -> float:
    _same_space(belief.space, event.space)
    return math.fsum(belief.mass[i] for i in sorted(event.members))


def conditional_probability(belief: JointBelief, a: Event, given: Event) -> float:
    _same_space(belief.space, a.space)
    _same_space(belief.space, given.space)
    joint = math.fsum(belief.mass[i] for i in sorted(a.members & given.members))
    return joint / event_probability(belief, given)


def are_independent(belief: JointBelief, a: Event, b: Event, tol: float = 1e-12) -> bool:
    _same_space(belief.space, a.space)
    _same_space(belief.space, b.space)
    joint = math.fsum(belief.mass[i] for i in sorted(a.members & b.members))
    return abs(joint - event_probability(belief, a) * event_probability(belief, b)) <= tol


def payoff(securities: SecuritySet, bundle: Sequence[float], atom: int) -> float:
    """Net dollars in ``atom``: holdings of securities containing it minus total cost."""
    x = np.asarray(bundle, dtype=float)
    if x.shape != (securities.m,):
        raise DomainError(f"bundle must have length {securities.m}")
    held = math.fsum(x[z] for z, ev in enumerate(securities.events) if atom in ev.members)
    return held - math.fsum(securities.prices * x)


def payoffs(securities: SecuritySet, bundle: Sequence[float]) -> np.ndarray:
    """Vectorized ``payoff`` over every atom."""
    x = np.asarray(bundle, dtype=float)
    if x.shape != (securities.m,):
        raise DomainError(f"bundle must have length {securities.m}")
    return securities.incidence.T @ x - securities.prices @ x


def check_consistency(securities: SecuritySet, eps: float = EPS_MEASURE) -> ConsistencyVerdict:
    """Decide whether prices are event probabilities of a strictly positive measure.

    Phase-one simplex on ``q = eps + r``, ``r >= 0``. When infeasible, the
    arbitrage direction maximizing total payoff inside the unit box is returned
    as certificate (canonical, so duplicate events priced 0.7/0.3 always give
    (-1, +1)); for very large structures the phase-one Farkas vector is used.
    """
    sigs, counts, inverse = securities.signature_classes
    n = securities.space.size
    k, m = sigs.shape
    p = securities.prices
    # rows: one per security, plus total mass; columns: mass above the floor per class
    A = np.vstack([sigs.T, np.ones((1, k))])
    b = np.concatenate([p - eps * (sigs.T @ counts), [1.0 - n * eps]])
    res = simplex.solve(A, b)
    if res.status == "optimal":
        q = eps + (res.x / counts)[inverse]
        verdict = ConsistencyVerdict(True, measure=q, method="phase-one simplex",
                                     residual=float(np.max(np.abs(securities.incidence @ q - p))))
        if verdict.verify(securities):
            return verdict
    direction, method = None, "certificate LP"
    if k <= CERT_LP_CAP:
        direction = _canonical_arbitrage(sigs, counts, p)
    if direction is None and res.dual is not None:
        cand = -res.dual[:m]
        cand = cand / max(np.max(np.abs(cand)), 1e-300)
        pay = (sigs - p) @ cand
        if pay.min() >= -TOL_FEAS and pay.max() > TOL_FEAS:
            direction, method = cand, "phase-one dual"
    if direction is None:
        return ConsistencyVerdict(False, method="phase-one simplex",
                                  note=f"an implied measure exists only with some atom mass below {eps:g}; "
                                       "no arbitrage portfolio with positive payoff was found")
    direction = _snap(direction)
    return ConsistencyVerdict(False, direction=direction, method=method,
                              residual=float(max(0.0, -(securities.payoff_matrix @ direction).min())))


def _canonical_arbitrage(sigs: np.ndarray, counts: np.ndarray, p: np.ndarray) -> np.ndarray | None:
    """max sum_w payoff_w(d)  s.t.  payoff(d) >= 0, -1 <= d <= 1."""
    k, m = sigs.shape
    G = sigs - p[None, :]
    # variables: u (m), v (m), su (m), sv (m), s (k);  d = u - v
    nvar = 4 * m + k
    A = np.zeros((k + 2 * m, nvar))
    A[:k, :m] = G
    A[:k, m:2 * m] = -G
    A[:k, 4 * m:] = -np.eye(k)
    A[k:k + m, :m] = np.eye(m)
    A[k:k + m, 2 * m:3 * m] = np.eye(m)
    A[k + m:, m:2 * m] = np.eye(m)
    A[k + m:, 3 * m:4 * m] = np.eye(m)
    b = np.concatenate([np.zeros(k), np.ones(2 * m)])
    c = np.zeros(nvar)
    c[4 * m:] = -counts
    res = simplex.solve(A, b, c)
    if res.status != "optimal" or -res.objective <= TOL_FEAS:
        return None
    d = res.x[:m] - res.x[m:2 * m]
    return d / np.max(np.abs(d))


def _snap(d: np.ndarray) -> np.ndarray:
    snapped = np.round(d, 12)
    snapped[snapped == 0] = 0.0  # no negative zeros in reports
    return snapped


def check_unit_combinations(securities: SecuritySet, tol: float = TOL_FEAS) -> ConsistencyVerdict:
    """Literal unit test: every nonzero sign vector must lose money in some atom.

    A sign vector whose payoff is zero everywhere counts as a violation.
    """
    m = securities.m
    if m > UNIT_COMBO_CAP:
        raise DomainError(f"unit-combination enumeration is capped at {UNIT_COMBO_CAP} securities, got {m}")
    sigs, _, _ = securities.signature_classes
    G = sigs - securities.prices[None, :]
    signs = np.array(list(itertools.product((-1, 0, 1), repeat=m)), dtype=float)
    signs = signs[np.any(signs != 0, axis=1)]
    worst = (signs @ G.T).min(axis=1)
    bad = np.flatnonzero(worst >= -tol)
    if bad.size == 0:
        return ConsistencyVerdict(True, method="unit combinations")
    s = signs[bad[0]]
    return ConsistencyVerdict(False, direction=s, method="unit combinations",
                              note="" if (G @ s).max() > tol else "payoff is zero in every atom")
