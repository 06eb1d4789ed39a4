"""Maximum-principle structure for the box-controlled navigation problem.

State constraint ``|x1| <= 1``, control set ``|u1| <= 1, |u2| <= 1``.
Off the boundary the control is bang-bang in the switching functions
``psi1 - mu`` and ``psi2``; on a boundary arc ``u1 = -v1`` keeps the
contact function zero and the measure multiplier tracks ``mu = psi1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .flowfield import FlowField

__all__ = [
    "ExtState",
    "ControlDecision",
    "SingularReport",
    "BoundaryInfeasible",
    "sgn",
    "gamma",
    "control_law",
    "boundary_mu",
    "rhs",
    "pontryagin_max",
    "pontryagin_max_path",
    "recover_lambda",
    "nontriviality_margin",
    "singular_diagnostics",
    "DEGENERACY_TOL",
]

DEGENERACY_TOL = 1e-6


class BoundaryInfeasible(ArithmeticError):
    """``|v1| >= 1`` on the boundary: the constraint cannot be held."""

    def __init__(self, side: int, v1: float):
        super().__init__(f"|v1| = {abs(v1):.6g} >= 1 on side {side:+d}")
        self.side = side
        self.v1 = v1


@dataclass(frozen=True)
class ExtState:
    """Integration state ``(t, x, psi, mu)`` plus arc mode.

    ``side`` is 0 for an interior arc and +1/-1 when pinned to ``x1 = side``.
    """

    t: float
    x: tuple[float, float]
    psi: tuple[float, float]
    mu: float = 0.0
    side: int = 0

    @property
    def on_boundary(self) -> bool:
        return self.side != 0

    @property
    def mode(self) -> str:
        return {0: "I", 1: "B+", -1: "B-"}[self.side]

    def with_(self, **changes) -> "ExtState":
        return replace(self, **changes)

    @classmethod
    def from_row(cls, row: Sequence[float]) -> "ExtState":
        return cls(
            t=float(row[0]),
            x=(float(row[1]), float(row[2])),
            psi=(float(row[3]), float(row[4])),
            mu=float(row[5]),
            side=int(row[8]),
        )


@dataclass(frozen=True)
class ControlDecision:
    u: tuple[float, float]
    singular_u1: bool = False
    singular_u2: bool = False


def sgn(z: float, eps: float = 0.0) -> float:
    """Sign with a dead band: 0 when ``|z| <= eps``."""
    if abs(z) <= eps:
        return 0.0
    return 1.0 if z > 0 else -1.0


def gamma(f: FlowField, t: float, x, u1: float) -> float:
    """Rate of change of ``x1`` under control ``u1``."""
    return u1 + f.velocity(t, x)[0]


def control_law(s: ExtState, f: FlowField, eps_sing: float = 1e-6) -> ControlDecision:
    """Control selected by the maximum condition at state ``s``.

    Raises :class:`BoundaryInfeasible` on a boundary arc where ``|v1| >= 1``;
    the integrator turns that into a forced departure.
    """
    z2 = s.psi[1]
    u2 = sgn(z2, eps_sing)
    if s.on_boundary:
        v1 = f.velocity(s.t, s.x)[0]
        if abs(v1) >= 1.0:
            raise BoundaryInfeasible(s.side, v1)
        return ControlDecision((-v1, u2), False, u2 == 0.0)
    u1 = sgn(s.psi[0] - s.mu, eps_sing)
    return ControlDecision((u1, u2), u1 == 0.0, u2 == 0.0)


def boundary_mu(s: ExtState) -> float:
    """Measure multiplier on a boundary arc."""
    if not s.on_boundary:
        raise ValueError("boundary_mu called on an interior state")
    return s.psi[0]


def rhs(s: ExtState, f: FlowField, u) -> tuple[tuple[float, float], tuple[float, float]]:
    """State and adjoint rates ``(dx, dpsi)`` for control ``u``."""
    v1, v2, a11, a12, a21, a22 = f.evaluate(s.t, s.x)
    p1, p2 = s.psi
    m = p1 if s.on_boundary else s.mu
    dx1 = 0.0 if s.on_boundary else u[0] + v1
    dx2 = u[1] + v2
    dp1 = -(p1 * a11 + p2 * a21) + m * a11
    dp2 = -(p1 * a12 + p2 * a22) + m * a12
    return (dx1, dx2), (dp1, dp2)


def pontryagin_max(s: ExtState, f: FlowField) -> float:
    """Maximum over the unit square of ``<psi, u + v> - mu * (u1 + v1)``."""
    v1, v2 = f.velocity(s.t, s.x)
    mu = s.psi[0] if s.on_boundary else s.mu
    z1 = s.psi[0] - mu
    z2 = s.psi[1]
    return abs(z1) + abs(z2) + z1 * v1 + z2 * v2


def pontryagin_max_path(samples: np.ndarray, f: FlowField) -> np.ndarray:
    """:func:`pontryagin_max` at every row of a sample array."""
    return np.array([pontryagin_max(ExtState.from_row(r), f) for r in samples])


def recover_lambda(traj, f: FlowField) -> float:
    """Cost multiplier implied by ``h(T) = 0`` at the final state."""
    return pontryagin_max(ExtState.from_row(traj.samples[-1]), f)


def nontriviality_margin(traj) -> float:
    """Minimum of ``|psi1 - mu| + |psi2|`` over the stored samples."""
    d = traj.samples
    if len(d) == 0:
        return 0.0
    mu = np.where(d[:, 8] != 0, d[:, 3], d[:, 5])
    return float(np.min(np.abs(d[:, 3] - mu) + np.abs(d[:, 4])))


@dataclass
class SingularReport:
    """Time intervals where a switching function and its safeguard both vanish."""

    s1_risk: list = field(default_factory=list)
    s2_risk: list = field(default_factory=list)

    @property
    def total_risk_measure(self) -> float:
        return float(sum(b - a for a, b in self.s1_risk) + sum(b - a for a, b in self.s2_risk))

    def to_dict(self) -> dict:
        return {
            "s1_risk": [list(iv) for iv in self.s1_risk],
            "s2_risk": [list(iv) for iv in self.s2_risk],
            "total_risk_measure": self.total_risk_measure,
        }


def _intervals(flags: np.ndarray, t: np.ndarray) -> list[tuple[float, float]]:
    # sample k covers [t_k, t_{k+1}]; the last sample has zero width
    out = []
    n = len(flags)
    k = 0
    while k < n:
        if not flags[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and flags[j + 1]:
            j += 1
        end = t[j + 1] if j + 1 < n else t[j]
        out.append((float(t[k]), float(end)))
        k = j + 1
    return out


def singular_diagnostics(traj, f: FlowField, eps_sing: float = 1e-6) -> SingularReport:
    """Flag interior stretches at risk of singular control.

    S1 risk: ``|psi1 - mu|`` and ``|dv2/dx1|`` both below ``eps_sing``.
    S2 risk: ``|psi2|`` and ``|dv1/dx2|`` both below ``eps_sing``.
    """
    d = traj.samples
    if len(d) == 0:
        return SingularReport()
    interior = d[:, 8] == 0
    jac = np.array([f.jacobian(r[0], (r[1], r[2])) for r in d])
    s1 = interior & (np.abs(d[:, 3] - d[:, 5]) < eps_sing) & (np.abs(jac[:, 1, 0]) < eps_sing)
    s2 = interior & (np.abs(d[:, 4]) < eps_sing) & (np.abs(jac[:, 0, 1]) < eps_sing)
    return SingularReport(_intervals(s1, d[:, 0]), _intervals(s2, d[:, 0]))


def is_finite_state(s: ExtState) -> bool:
    return all(math.isfinite(v) for v in (s.t, *s.x, *s.psi, s.mu))
