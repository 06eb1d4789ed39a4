"""Fixed-step RK4 propagation of the state-adjoint system with event detection.

The control is evaluated once at the start of each step and held through
the four stages. Events: boundary contact (located by linear interpolation
inside the step), terminal capture (bracketed distance minimum refined by
golden section), domain exit, horizon, and forced departure when a boundary
arc can no longer be held.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernel as K
from .flowfield import FlowField
from .pmp import ExtState, control_law, rhs
from .problem import ProblemSpec

__all__ = [
    "Event",
    "Segment",
    "RawOutcome",
    "rk4_step",
    "integrate_until_event",
    "run_kernel",
    "NonFiniteState",
]

EVENT_NAMES = {
    K.EV_BOUNDARY_HIT: "BoundaryHit",
    K.EV_TERMINAL_HIT: "TerminalHit",
    K.EV_DOMAIN_EXIT: "DomainExit",
    K.EV_HORIZON: "HorizonReached",
    K.EV_FORCED_DEPARTURE: "ForcedDeparture",
    K.EV_NON_FINITE: "NonFinite",
    K.EV_INCONSISTENT_DEPARTURE: "InconsistentDeparture",
    K.EV_MONOTONICITY_VIOLATION: "MonotonicityViolation",
    K.EV_STEP_LIMIT: "HorizonReached",
}


class NonFiniteState(ArithmeticError):
    pass


@dataclass(frozen=True)
class Event:
    kind: str
    t_event: float
    state_at_event: ExtState
    side: int = 0


@dataclass
class Segment:
    """Samples of one arc: a row per step boundary plus the event row.

    Columns of ``data``: t, x1, x2, psi1, psi2, mu, u1, u2, side.
    """

    data: np.ndarray
    event: Optional[Event]

    def __len__(self) -> int:
        return len(self.data)

    @property
    def samples(self) -> np.ndarray:
        return self.data

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def controls(self) -> np.ndarray:
        return self.data[:, 6:8]

    @property
    def side(self) -> int:
        return int(self.data[0, 8]) if len(self.data) else 0

    def state(self, i: int) -> ExtState:
        return ExtState.from_row(self.data[i])

    def truncated(self, n: int) -> "Segment":
        """First ``n`` rows, without an event."""
        return Segment(self.data[:n].copy(), None)


@dataclass(frozen=True)
class RawOutcome:
    code: int
    side: int
    state: ExtState
    closest: tuple[float, float, float, float]  # distance, x1, x2, t
    rows: Optional[np.ndarray]

    @property
    def kind(self) -> str:
        return EVENT_NAMES[self.code]


def rk4_step(s: ExtState, f: FlowField, tau: float, eps_sing: float = 1e-6) -> ExtState:
    """One RK4 step with the control frozen at its start-of-step value.

    Reference implementation in plain Python; the compiled integrator must
    reproduce it.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    u = control_law(s, f, eps_sing).u
    return _rk4_fixed(s, f, tau, u)


def _rk4_fixed(s: ExtState, f: FlowField, tau: float, u) -> ExtState:
    def stage(base: ExtState, k, h):
        return base.with_(
            t=base.t + h,
            x=(base.x[0] + h * k[0][0], base.x[1] + h * k[0][1]),
            psi=(base.psi[0] + h * k[1][0], base.psi[1] + h * k[1][1]),
        )

    k1 = rhs(s, f, u)
    k2 = rhs(stage(s, k1, 0.5 * tau), f, u)
    k3 = rhs(stage(s, k2, 0.5 * tau), f, u)
    k4 = rhs(stage(s, k3, tau), f, u)
    c = tau / 6.0
    x1 = s.x[0] + c * (k1[0][0] + 2.0 * k2[0][0] + 2.0 * k3[0][0] + k4[0][0])
    x2 = s.x[1] + c * (k1[0][1] + 2.0 * k2[0][1] + 2.0 * k3[0][1] + k4[0][1])
    p1 = s.psi[0] + c * (k1[1][0] + 2.0 * k2[1][0] + 2.0 * k3[1][0] + k4[1][0])
    p2 = s.psi[1] + c * (k1[1][1] + 2.0 * k2[1][1] + 2.0 * k3[1][1] + k4[1][1])
    mu = s.mu
    if s.on_boundary:
        x1 = s.x[0]
        mu = p1
    out = ExtState(s.t + tau, (x1, x2), (p1, p2), mu, s.side)
    if not np.all(np.isfinite([x1, x2, p1, p2, mu])):
        raise NonFiniteState(f"non-finite state after step from t={s.t}")
    return out


def run_kernel(
    s0: ExtState,
    spec: ProblemSpec,
    record: bool = False,
    commit_u1: int = 0,
    commit_window: int = 10,
) -> RawOutcome:
    """Call the compiled integrator from ``s0`` until its first event."""
    lo, hi = spec.x2_bounds
    run = K.kernels(spec.field.kernel_code)[2]
    code, side, ev, closest, rec, n = run(
        spec.field.kernel_data(),
        float(s0.t), float(s0.x[0]), float(s0.x[1]),
        float(s0.psi[0]), float(s0.psi[1]), float(s0.mu), int(s0.side),
        float(spec.tau), spec.B[0], spec.B[1], float(spec.terminal_tol),
        lo, hi, float(spec.t_max), float(spec.eps_sing),
        int(commit_u1), int(commit_window), bool(record), spec.max_steps, float(spec.bound),
    )
    end_side = int(s0.side)
    if code == K.EV_BOUNDARY_HIT:
        end_side = 0
    state = ExtState(
        float(ev[0]), (float(ev[1]), float(ev[2])), (float(ev[3]), float(ev[4])), float(ev[5]), end_side
    )
    rows = rec[:n].copy() if record else None
    return RawOutcome(int(code), int(side), state, tuple(float(c) for c in closest), rows)


def integrate_until_event(s0: ExtState, f: FlowField, spec: ProblemSpec) -> Segment:
    """Integrate from ``s0`` and return the sampled segment up to the first event."""
    if f is not spec.field:
        spec = spec.with_(field=f)
    if not all(np.isfinite([s0.t, *s0.x, *s0.psi, s0.mu])):
        raise NonFiniteState("initial state is not finite")
    out = run_kernel(s0, spec, record=True)
    if out.code == K.EV_NON_FINITE:
        raise NonFiniteState(f"integration produced a non-finite state near t={out.state.t}")
    ev = Event(out.kind, out.state.t, out.state, out.side)
    return Segment(out.rows, ev)
