"""Planar time-dependent flow fields ``v(t, x)``.

Three built-in fields are provided (``steady_parabolic``, ``tidal_parabolic``,
``shear_tidal``), and arbitrary fields can be assembled from two expression
strings with :func:`from_expressions`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernel as K
from . import fieldexpr as fx

__all__ = [
    "FlowField",
    "AssumptionReport",
    "SafeguardScan",
    "BUILTINS",
    "builtin",
    "from_expressions",
    "check_assumption_h",
    "scan_safeguards",
]

BUILTINS = {
    "steady_parabolic": (K.KIND_STEADY_PARABOLIC, "x1/4", "-x1^2"),
    "tidal_parabolic": (K.KIND_TIDAL_PARABOLIC, "x1/4 + sin(pi*t/2)", "-x1^2"),
    "shear_tidal": (K.KIND_SHEAR_TIDAL, "x1/4 + x2/10", "-x1^2 - sin(pi*t/2)^2/2"),
}

_EMPTY_OPS = np.zeros(1, dtype=np.int64)
_EMPTY_ARGS = np.zeros(1, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class FlowField:
    """A velocity field with spatial Jacobian and time-partial access.

    ``kind`` is ``"builtin"`` (analytic derivatives) or ``"expression"``
    (central finite differences, step ``1e-6 * max(1, |coordinate|)``).
    """

    id: str
    kind: str
    vx_source: str
    vy_source: str
    _code: int = field(repr=False)
    _vx: Optional[fx.Expr] = field(default=None, repr=False)
    _vy: Optional[fx.Expr] = field(default=None, repr=False)
    _programs: tuple = field(default=(_EMPTY_OPS, _EMPTY_ARGS, _EMPTY_OPS, _EMPTY_ARGS), repr=False)

    @property
    def jacobian_source(self) -> str:
        return "analytic" if self.kind == "builtin" else "finite-difference"

    @property
    def kernel_code(self) -> int:
        return self._code

    def kernel_data(self) -> tuple:
        """Fresh argument tuple for the compiled integrator (owns its scratch stack)."""
        return K.field_data(self._code, self._programs)

    def velocity(self, t: float, x) -> tuple[float, float]:
        x1, x2 = float(x[0]), float(x[1])
        if self.kind == "builtin":
            v = K.builtin_eval(self._code, float(t), x1, x2)
            return v[0], v[1]
        return self._vx.eval(float(t), x1, x2), self._vy.eval(float(t), x1, x2)

    def jacobian(self, t: float, x) -> np.ndarray:
        """``J[i, j] = dv_i / dx_j``."""
        x1, x2 = float(x[0]), float(x[1])
        if self.kind == "builtin":
            _, _, a11, a12, a21, a22 = K.builtin_eval(self._code, float(t), x1, x2)
            return np.array([[a11, a12], [a21, a22]])
        return fd_jacobian(self, float(t), x1, x2)

    def time_partial(self, t: float, x) -> tuple[float, float]:
        x1, x2 = float(x[0]), float(x[1])
        if self.kind == "builtin":
            return K.builtin_time_partial(self._code, float(t), x1, x2)
        h = K.FD_STEP * max(1.0, abs(t))
        a = self.velocity(t + h, (x1, x2))
        b = self.velocity(t - h, (x1, x2))
        return (a[0] - b[0]) / (2 * h), (a[1] - b[1]) / (2 * h)

    def evaluate(self, t: float, x) -> tuple[float, float, float, float, float, float]:
        """Velocity and Jacobian in one call: ``(v1, v2, a11, a12, a21, a22)``."""
        if self.kind == "builtin":
            return K.builtin_eval(self._code, float(t), float(x[0]), float(x[1]))
        v1, v2 = self.velocity(t, x)
        j = self.jacobian(t, x)
        return v1, v2, j[0, 0], j[0, 1], j[1, 0], j[1, 1]

    def describe(self) -> str:
        return f"v = ({self.vx_source}, {self.vy_source})"


def fd_jacobian(f: FlowField, t: float, x1: float, x2: float) -> np.ndarray:
    """Central-difference Jacobian of ``f.velocity``."""
    h1 = K.FD_STEP * max(1.0, abs(x1))
    h2 = K.FD_STEP * max(1.0, abs(x2))
    vp1 = f.velocity(t, (x1 + h1, x2))
    vm1 = f.velocity(t, (x1 - h1, x2))
    vp2 = f.velocity(t, (x1, x2 + h2))
    vm2 = f.velocity(t, (x1, x2 - h2))
    return np.array(
        [
            [(vp1[0] - vm1[0]) / (2 * h1), (vp2[0] - vm2[0]) / (2 * h2)],
            [(vp1[1] - vm1[1]) / (2 * h1), (vp2[1] - vm2[1]) / (2 * h2)],
        ]
    )


def builtin(name: str) -> FlowField:
    """Return one of the built-in fields by name."""
    try:
        code, vx, vy = BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown built-in field {name!r}; choose from {sorted(BUILTINS)}"
        ) from None
    return FlowField(id=name, kind="builtin", vx_source=vx, vy_source=vy, _code=code)


def from_expressions(vx, vy, id: Optional[str] = None) -> FlowField:
    """Build a field from two expressions (strings or parsed trees)."""
    ex = fx.parse(vx) if isinstance(vx, str) else vx
    ey = fx.parse(vy) if isinstance(vy, str) else vy
    for e in (ex, ey):
        if fx.stack_depth(e) > 60:
            raise fx.ExprError("expression nested too deeply")
    sx = vx if isinstance(vx, str) else fx.to_source(ex)
    sy = vy if isinstance(vy, str) else fx.to_source(ey)
    programs = fx.compile_program(ex) + fx.compile_program(ey)
    return FlowField(
        id=id or f"expr({sx}; {sy})",
        kind="expression",
        vx_source=sx,
        vy_source=sy,
        _code=K.KIND_EXPRESSION,
        _vx=ex,
        _vy=ey,
        _programs=programs,
    )


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionReport:
    """Outcome of scanning ``|v1| < 1`` over a grid."""

    sup_abs_v1: float
    violated: bool
    witnesses: list = field(default_factory=list)
    eval_failures: list = field(default_factory=list)
    grid: str = ""

    def to_dict(self) -> dict:
        return {
            "sup_abs_v1": self.sup_abs_v1,
            "violated": self.violated,
            "n_witnesses": len(self.witnesses),
            "witnesses": [list(w) for w in self.witnesses[:20]],
            "n_eval_failures": len(self.eval_failures),
            "grid": self.grid,
        }


def _scan_grid(t_range, x2_range, nt, nx):
    if nt < 2 or nx < 2:
        raise ValueError("nt and nx must be at least 2")
    ts = np.linspace(t_range[0], t_range[1], nt)
    x1s = np.linspace(-1.0, 1.0, nx)
    x2s = np.linspace(x2_range[0], x2_range[1], nx)
    return ts, x1s, x2s


def check_assumption_h(
    f: FlowField,
    t_range=(0.0, 8.0),
    nt: int = 81,
    nx: int = 41,
    x2_range=(-7.0, 1.0),
) -> AssumptionReport:
    """Scan ``|v1(t, x)|`` for the regularity hypothesis ``|v1| < 1``.

    The grid covers ``t_range`` x ``[-1, 1]`` x ``x2_range``. This is a
    report only; callers decide what to do with a violation.
    """
    ts, x1s, x2s = _scan_grid(t_range, x2_range, nt, nx)
    sup = 0.0
    witnesses = []
    failures = []
    for t in ts:
        for x1 in x1s:
            for x2 in x2s:
                try:
                    v1 = f.velocity(t, (x1, x2))[0]
                except ArithmeticError:
                    failures.append((float(t), float(x1), float(x2)))
                    continue
                a = abs(v1)
                if not math.isfinite(a):
                    failures.append((float(t), float(x1), float(x2)))
                    continue
                sup = max(sup, a)
                if a >= 1.0:
                    witnesses.append((float(t), float(x1), float(x2)))
    grid = (
        f"t in [{t_range[0]:g}, {t_range[1]:g}] ({nt} pts), x1 in [-1, 1] ({nx} pts), "
        f"x2 in [{x2_range[0]:g}, {x2_range[1]:g}] ({nx} pts)"
    )
    return AssumptionReport(
        sup_abs_v1=float(sup),
        violated=bool(witnesses),
        witnesses=witnesses,
        eval_failures=failures,
        grid=grid,
    )


@dataclass
class SafeguardScan:
    """Where the singular-control safeguards ``dv2/dx1`` and ``dv1/dx2`` vanish."""

    n_points: int
    dv2_dx1_zero: int
    dv1_dx2_zero: int
    dv2_dx1_zero_x1: list
    tol: float

    @property
    def dv1_dx2_identically_zero(self) -> bool:
        return self.dv1_dx2_zero == self.n_points

    @property
    def dv2_dx1_identically_zero(self) -> bool:
        return self.dv2_dx1_zero == self.n_points

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "dv2_dx1_zero_points": self.dv2_dx1_zero,
            "dv1_dx2_zero_points": self.dv1_dx2_zero,
            "dv2_dx1_zero_x1_values": self.dv2_dx1_zero_x1,
            "dv1_dx2_identically_zero": self.dv1_dx2_identically_zero,
            "dv2_dx1_identically_zero": self.dv2_dx1_identically_zero,
        }


def scan_safeguards(
    f: FlowField, t_range=(0.0, 8.0), nt: int = 17, nx: int = 21, x2_range=(-7.0, 1.0), tol=1e-6
) -> SafeguardScan:
    ts, x1s, x2s = _scan_grid(t_range, x2_range, nt, nx)
    n = z21 = z12 = 0
    x1_zero = set()
    for t in ts:
        for x1 in x1s:
            for x2 in x2s:
                n += 1
                try:
                    j = f.jacobian(t, (x1, x2))
                except ArithmeticError:
                    continue
                if abs(j[1, 0]) < tol:
                    z21 += 1
                    x1_zero.add(round(float(x1), 12))
                if abs(j[0, 1]) < tol:
                    z12 += 1
    return SafeguardScan(n, z21, z12, sorted(x1_zero), tol)
