"""Problem definition shared by the integrator and the shooting driver."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flowfield import FlowField

__all__ = ["ProblemSpec", "T_MAX_CAP"]

T_MAX_CAP = 20.0


def _sup_abs_v1(f: FlowField, x2_lo: float, x2_hi: float, t_hi: float, bound: float) -> float:
    sup = 0.0
    for t in np.linspace(0.0, t_hi, 41):
        for x1 in np.linspace(-1.0, 1.0, 21):
            for x2 in np.linspace(x2_lo, x2_hi, 21):
                try:
                    v1 = abs(f.velocity(t, (x1, x2))[0])
                except ArithmeticError:
                    continue
                if math.isfinite(v1):
                    sup = max(sup, v1)
    return sup


@dataclass(frozen=True)
class ProblemSpec:
    """Endpoints, tolerances and integration parameters of one solve.

    ``bound`` is the half-width of the admissible strip ``|x1| <= bound``;
    the channel problem uses 1. Wider strips are useful for oracles where
    the state constraint should stay inactive.

    ``t_max`` defaults to ``3 * |A - B|_inf / (1 - sup|v1|)`` capped at 20
    (20 outright when ``sup|v1| >= 1``).
    """

    field: FlowField
    A: tuple[float, float]
    B: tuple[float, float]
    bound: float = 1.0
    tau: float = 1e-4
    theta_step: float = 1e-2
    terminal_tol: float = 1e-3
    junction_tol: float = 1e-3
    eps_sing: float = 1e-6
    t_max: Optional[float] = None
    departure_stride: int = 100
    max_boundary_visits: int = 3

    def __post_init__(self):
        A = (float(self.A[0]), float(self.A[1]))
        B = (float(self.B[0]), float(self.B[1]))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if not (self.bound > 0 and math.isfinite(self.bound)):
            raise ValueError("bound must be positive and finite")
        for name in ("tau", "theta_step", "terminal_tol", "junction_tol", "eps_sing"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.departure_stride < 1:
            raise ValueError("departure_stride must be >= 1")
        if A == B:
            raise ValueError("A and B must differ")
        if abs(A[0]) > self.bound or abs(B[0]) > self.bound:
            raise ValueError(f"|A1| and |B1| must not exceed the bound {self.bound:g}")
        if self.t_max is None:
            lo, hi = self.x2_bounds
            sup = _sup_abs_v1(self.field, lo, hi, T_MAX_CAP, self.bound)
            span = max(abs(A[0] - B[0]), abs(A[1] - B[1]))
            t_max = T_MAX_CAP if sup >= 1.0 else min(T_MAX_CAP, 3.0 * span / (1.0 - sup))
            object.__setattr__(self, "t_max", float(t_max))
        elif not self.t_max > 0:
            raise ValueError("t_max must be positive")

    @property
    def x2_bounds(self) -> tuple[float, float]:
        return min(self.A[1], self.B[1]) - 1.0, max(self.A[1], self.B[1]) + 1.0

    @property
    def max_steps(self) -> int:
        return int(math.ceil(self.t_max / self.tau)) + 10

    def with_(self, **changes) -> "ProblemSpec":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return ProblemSpec(**kw)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "field"}
        d["A"] = list(self.A)
        d["B"] = list(self.B)
        d["field"] = {
            "id": self.field.id,
            "kind": self.field.kind,
            "vx": self.field.vx_source,
            "vy": self.field.vy_source,
        }
        return d
