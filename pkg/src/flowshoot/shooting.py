"""Shooting on the initial adjoint angle and assembly of the field of extremals.

A shot starts at ``A`` with ``psi(0) = (cos theta, sin theta)`` and
``mu = 0``. It ends either at ``B`` (an extremal), at a boundary contact
where ``psi1`` matches the current multiplier (a junction, after which the
boundary is followed and departure branches are spawned), or as a miss.
Misses carry two scalar signals used for bisection: the signed lateral miss
at closest approach to ``B`` and, for boundary contacts, the junction gap
``psi1(t*) - mu``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernel as K
from .integrate import Event, RawOutcome, Segment, run_kernel
from .pmp import (
    ExtState,
    SingularReport,
    nontriviality_margin,
    recover_lambda,
    singular_diagnostics,
)
from .problem import ProblemSpec

__all__ = [
    "ProblemSpec",
    "MissRecord",
    "ShotOutcome",
    "Extremal",
    "ExtremalField",
    "shoot",
    "follow_boundary",
    "sweep",
    "signed_miss",
    "classify",
]

log = logging.getLogger(__name__)

THETA_BRACKET_TOL = 1e-9
COMMIT_WINDOW = 10
CLASS_NAMES = {0: "Inner", 1: "RightBoundary", -1: "LeftBoundary"}


def signed_miss(spec: ProblemSpec, point) -> float:
    """Cross product of the unit A->B chord with the vector B->point."""
    ax, ay = spec.B[0] - spec.A[0], spec.B[1] - spec.A[1]
    n = math.hypot(ax, ay)
    dx, dy = point[0] - spec.B[0], point[1] - spec.B[1]
    return (ax * dy - ay * dx) / n


def classify(sides) -> str:
    """Class name from the ordered boundary sides an extremal touches."""
    return CLASS_NAMES[sides[0] if sides else 0]


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class Plan:
    """Replay recipe: initial angle plus one departure index per boundary visit."""

    theta: float
    departures: tuple = ()


@dataclass(frozen=True)
class MissRecord:
    theta: float
    kind: str
    closest_distance: float
    closest_point: tuple
    closest_time: float
    signed_miss: float
    hit_side: int = 0
    junction_gap: float = math.nan
    departure_index: Optional[int] = None

    @property
    def is_boundary_hit(self) -> bool:
        return self.kind == "BoundaryHit"


@dataclass
class Extremal:
    """A candidate trajectory from A to B satisfying the necessary conditions."""

    theta0: float
    arcs: list
    T: float
    classification: str
    sides: tuple
    departure_times: list
    plan: Plan
    lam: float = math.nan
    nontriviality_margin: float = math.nan
    singular_report: SingularReport = field(default_factory=SingularReport)
    target: tuple = (math.nan, math.nan)

    @property
    def samples(self) -> np.ndarray:
        return np.concatenate([a.data for a in self.arcs], axis=0)

    @property
    def degenerate(self) -> bool:
        from .pmp import DEGENERACY_TOL

        return self.nontriviality_margin < DEGENERACY_TOL

    @property
    def lambda_nonnegative(self) -> bool:
        return self.lam >= -1e-6

    @property
    def final_distance(self) -> float:
        return float(math.hypot(*(self.samples[-1, 1:3] - np.asarray(self.target))))

    def summary(self) -> dict:
        return {
            "theta0": self.theta0,
            "T": self.T,
            "classification": self.classification,
            "sides": list(self.sides),
            "lambda": self.lam,
            "lambda_nonnegative": bool(self.lambda_nonnegative),
            "nontriviality_margin": self.nontriviality_margin,
            "degenerate": bool(self.degenerate),
            "singular_risk_measure": self.singular_report.total_risk_measure,
            "departure_times": list(self.departure_times),
        }


@dataclass
class ShotOutcome:
    theta: float
    miss: Optional[MissRecord]
    plans: list  # plans of extremals reached through this shot
    junction: bool = False


@dataclass
class ExtremalField:
    extremals: list
    optimal_index: Optional[int]
    problem: ProblemSpec
    diagnostics: dict

    @property
    def optimal(self) -> Optional[Extremal]:
        return None if self.optimal_index is None else self.extremals[self.optimal_index]

    def counts(self) -> dict:
        out = {"Inner": 0, "RightBoundary": 0, "LeftBoundary": 0}
        for e in self.extremals:
            out[e.classification] += 1
        return out


@dataclass
class _Stats:
    shots: int = 0
    branches: int = 0
    bisection_iterations: int = 0
    boundary_arcs: int = 0
    discarded_branches: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


# ---------------------------------------------------------------------------
# single shots


def _initial_state(spec: ProblemSpec, theta: float) -> ExtState:
    return ExtState(0.0, spec.A, (math.cos(theta), math.sin(theta)), 0.0, 0)


def _miss(spec: ProblemSpec, theta: float, out: RawOutcome, mu_before: float, index=None) -> MissRecord:
    d, cx, cy, ct = out.closest
    gap = math.nan
    if out.code == K.EV_BOUNDARY_HIT:
        gap = out.state.psi[0] - mu_before
    return MissRecord(
        theta=theta,
        kind=out.kind,
        closest_distance=d,
        closest_point=(cx, cy),
        closest_time=ct,
        signed_miss=signed_miss(spec, (cx, cy)),
        hit_side=out.side if out.code == K.EV_BOUNDARY_HIT else 0,
        junction_gap=gap,
        departure_index=index,
    )


def _entry_state(out: RawOutcome) -> ExtState:
    s = out.state
    return ExtState(s.t, s.x, s.psi, s.psi[0], out.side)


def shoot(theta: float, spec: ProblemSpec, _stats: Optional[_Stats] = None) -> ShotOutcome:
    """Fire one shot at angle ``theta`` and follow any junction it makes."""
    stats = _stats or _Stats()
    stats.shots += 1
    out = run_kernel(_initial_state(spec, theta), spec)
    plan = Plan(theta)
    if out.code == K.EV_TERMINAL_HIT:
        return ShotOutcome(theta, None, [plan])
    miss = _miss(spec, theta, out, 0.0)
    if out.code == K.EV_BOUNDARY_HIT and abs(miss.junction_gap) < spec.junction_tol:
        plans = follow_boundary(_entry_state(out), spec, plan, visits=1, _stats=stats)
        return ShotOutcome(theta, miss, plans, junction=True)
    return ShotOutcome(theta, miss, [])


def _branch_state(rows: np.ndarray, i: int) -> ExtState:
    r = rows[i]
    return ExtState(float(r[0]), (float(r[1]), float(r[2])), (float(r[3]), float(r[4])), float(r[3]), 0)


def follow_boundary(
    entry: ExtState,
    spec: ProblemSpec,
    plan: Plan,
    visits: int = 1,
    _stats: Optional[_Stats] = None,
) -> list:
    """Follow a boundary arc from ``entry`` and search its departure branches.

    Returns the plans of all extremals found through this arc (including
    nested boundary visits).
    """
    if not entry.on_boundary:
        raise ValueError("follow_boundary needs an on-boundary entry state")
    stats = _stats or _Stats()
    stats.boundary_arcs += 1
    arc = run_kernel(entry, spec, record=True)
    rows = arc.rows
    side = entry.side
    found = []
    if arc.code == K.EV_TERMINAL_HIT:
        found.append(Plan(plan.theta, plan.departures + (-1,)))
        return found
    # last row is the arc's end state (or a duplicate stop state)
    n = len(rows)
    forced = arc.code == K.EV_FORCED_DEPARTURE
    indices = list(range(0, n - 1, spec.departure_stride))
    if forced and (n - 1) not in indices:
        indices.append(n - 1)
    if not indices:
        return found

    cache: dict = {}

    def probe(i: int):
        if i in cache:
            return cache[i]
        stats.branches += 1
        s0 = _branch_state(rows, i)
        out = run_kernel(s0, spec, commit_u1=-side, commit_window=COMMIT_WINDOW)
        p = Plan(plan.theta, plan.departures + (i,))
        if out.code == K.EV_INCONSISTENT_DEPARTURE:
            stats.discarded_branches += 1
            res = ShotOutcome(plan.theta, None, [], False)
        elif out.code == K.EV_TERMINAL_HIT:
            res = ShotOutcome(plan.theta, None, [p])
        else:
            miss = _miss(spec, plan.theta, out, s0.mu, index=i)
            if (
                out.code == K.EV_BOUNDARY_HIT
                and abs(miss.junction_gap) < spec.junction_tol
                and visits < spec.max_boundary_visits
            ):
                plans = follow_boundary(_entry_state(out), spec, p, visits + 1, stats)
                res = ShotOutcome(plan.theta, miss, plans, junction=True)
            else:
                res = ShotOutcome(plan.theta, miss, [])
        cache[i] = res
        return res

    outcomes = [(i, probe(i)) for i in indices]
    for _, o in outcomes:
        found.extend(o.plans)
    for (ia, oa), (ib, ob) in zip(outcomes, outcomes[1:]):
        found.extend(_refine_pair(ia, oa, ib, ob, probe, spec, stats, integer=True))
    return found


# ---------------------------------------------------------------------------
# bisection


def _key(o: ShotOutcome, kind) -> float:
    """Discrete signal whose change across a bracket calls for bisection."""
    m = o.miss
    mode, s = kind
    if mode == "junction":
        if m.hit_side == s:
            return 1.0 if m.junction_gap > 0 else -1.0
        return 0.0
    return 1.0 if m.signed_miss > 0 else -1.0


def _bracket_kinds(oa: ShotOutcome, ob: ShotOutcome) -> list:
    if oa.plans or ob.plans or oa.junction or ob.junction:
        return []
    if oa.miss is None or ob.miss is None:
        return []
    kinds = [("junction", s) for s in (1, -1) if _key(oa, ("junction", s)) != _key(ob, ("junction", s))]
    if _key(oa, ("miss", 0)) != _key(ob, ("miss", 0)):
        kinds.append(("miss", 0))
    return kinds


def _refine_pair(pa, oa, pb, ob, probe: Callable, spec: ProblemSpec, stats: _Stats, integer: bool):
    found = []
    for kind in _bracket_kinds(oa, ob):
        found.extend(_bisect(pa, oa, pb, ob, kind, probe, stats, integer))
    return found


def _bisect(pa, oa, pb, ob, kind, probe, stats, integer):
    """Shrink ``[pa, pb]`` around a change of the bracket signal.

    Stops at the first probe that yields extremals or passes a junction, or
    when the bracket can no longer shrink.
    """
    ka = _key(oa, kind)
    while True:
        if integer:
            if pb - pa <= 1:
                return []
            pm = (pa + pb) // 2
        else:
            if pb - pa < THETA_BRACKET_TOL:
                return []
            pm = 0.5 * (pa + pb)
        stats.bisection_iterations += 1
        om = probe(pm)
        if om.plans:
            return list(om.plans)
        if om.junction or om.miss is None:
            return []
        if _key(om, kind) == ka:
            pa = pm
        else:
            pb = pm


# ---------------------------------------------------------------------------
# replay and sweep


def _replay(plan: Plan, spec: ProblemSpec) -> Optional[Extremal]:
    """Re-integrate a plan with sample recording and build the extremal."""
    arcs = []
    sides = []
    departure_times = []
    out = run_kernel(_initial_state(spec, plan.theta), spec, record=True)
    arcs.append(Segment(out.rows, Event(out.kind, out.state.t, out.state, out.side)))
    for dep in plan.departures:
        if out.code != K.EV_BOUNDARY_HIT:
            return None
        entry = _entry_state(out)
        sides.append(entry.side)
        arc = run_kernel(entry, spec, record=True)
        if dep == -1:
            if arc.code != K.EV_TERMINAL_HIT:
                return None
            arcs.append(Segment(arc.rows, Event(arc.kind, arc.state.t, arc.state, entry.side)))
            out = arc
            break
        rows = arc.rows
        arcs.append(Segment(rows[: dep + 1].copy(), None))
        departure_times.append(float(rows[dep, 0]))
        s0 = _branch_state(rows, dep)
        out = run_kernel(s0, spec, record=True, commit_u1=-entry.side, commit_window=COMMIT_WINDOW)
        arcs.append(Segment(out.rows, Event(out.kind, out.state.t, out.state, out.side)))
    if out.code != K.EV_TERMINAL_HIT:
        return None
    ext = Extremal(
        theta0=float(plan.theta),
        arcs=arcs,
        T=float(out.state.t),
        classification=classify(sides),
        sides=tuple(sides),
        departure_times=departure_times,
        plan=plan,
        target=spec.B,
    )
    f = spec.field
    ext.lam = float(recover_lambda(ext, f))
    ext.nontriviality_margin = nontriviality_margin(ext)
    ext.singular_report = singular_diagnostics(ext, f, spec.eps_sing)
    return ext


def _theta_grid(spec: ProblemSpec) -> np.ndarray:
    n = int(math.floor(2.0 * math.pi / spec.theta_step - 1e-12)) + 1
    return np.arange(n) * spec.theta_step


def _dedup(extremals: list, spec: ProblemSpec) -> list:
    """Drop extremals within ``theta_step / 4`` of a kept one of the same class.

    Among duplicates the shortest travelling time wins.
    """
    ranked = sorted(extremals, key=lambda e: (e.T, e.final_distance, e.theta0, tuple(e.departure_times)))
    kept: list = []
    sep = spec.theta_step / 4.0
    for e in ranked:
        for k in kept:
            dtheta = abs(e.theta0 - k.theta0)
            dtheta = min(dtheta, 2 * math.pi - dtheta)
            if dtheta <= sep and e.classification == k.classification:
                break
        else:
            kept.append(e)
    return sorted(kept, key=lambda e: (e.theta0, tuple(e.departure_times)))


def sweep(spec: ProblemSpec, progress: Optional[Callable[[int, int], None]] = None) -> ExtremalField:
    """Compute the field of extremals for ``spec``.

    Shots are fired on a uniform grid of angles; adjacent pairs whose junction
    or lateral-miss signal changes are refined by bisection on the angle.
    """
    stats = _Stats()
    thetas = _theta_grid(spec)
    outcomes = []
    for k, th in enumerate(thetas):
        outcomes.append(shoot(float(th), spec, stats))
        if progress is not None:
            progress(k + 1, len(thetas))

    def probe(th: float) -> ShotOutcome:
        return shoot(th % (2.0 * math.pi), spec, stats)

    plans = []
    for o in outcomes:
        plans.extend(o.plans)
    pairs = list(zip(thetas, outcomes, thetas[1:], outcomes[1:]))
    pairs.append((thetas[-1], outcomes[-1], thetas[0] + 2.0 * math.pi, outcomes[0]))
    for pa, oa, pb, ob in pairs:
        plans.extend(_refine_pair(float(pa), oa, float(pb), ob, probe, spec, stats, integer=False))

    plans = sorted(set(Plan(p.theta % (2.0 * math.pi), p.departures) for p in plans), key=lambda p: (p.theta, p.departures))
    extremals = []
    for p in plans:
        e = _replay(p, spec)
        if e is not None:
            extremals.append(e)
    extremals = _dedup(extremals, spec)
    optimal = None
    if extremals:
        optimal = int(np.argmin([e.T for e in extremals]))
    diag = stats.as_dict()
    diag["theta_grid_size"] = len(thetas)
    diag["candidates_before_dedup"] = len(plans)
    return ExtremalField(extremals, optimal, spec, diag)
