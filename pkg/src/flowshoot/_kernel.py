"""Compiled inner loop: field evaluation and fixed-step RK4 with events.

Everything here is scalar numba code. The Python-level modules
(:mod:`flowshoot.pmp`, :mod:`flowshoot.integrate`) hold the reference
formulas; tests cross-check a single compiled step against them.
"""
import math

import numpy as np
from numba import njit

from . import fieldexpr as fx

KIND_STEADY_PARABOLIC = 0
KIND_TIDAL_PARABOLIC = 1
KIND_SHEAR_TIDAL = 2
KIND_EXPRESSION = 3

# event codes
EV_NONE = 0
EV_BOUNDARY_HIT = 1
EV_TERMINAL_HIT = 2
EV_DOMAIN_EXIT = 3
EV_HORIZON = 4
EV_FORCED_DEPARTURE = 5
EV_NON_FINITE = 6
EV_INCONSISTENT_DEPARTURE = 7
EV_MONOTONICITY_VIOLATION = 8
EV_STEP_LIMIT = 9

# record columns
NCOL = 9  # t, x1, x2, psi1, psi2, mu, u1, u2, side

MONOTONE_SLACK = 1e-9
FD_STEP = 1e-6


def builtin_eval(kind, t, x1, x2):
    """Velocity and spatial Jacobian of a built-in field.

    Returns ``(v1, v2, dv1/dx1, dv1/dx2, dv2/dx1, dv2/dx2)``.
    """
    if kind == KIND_STEADY_PARABOLIC:
        return 0.25 * x1, -x1 * x1, 0.25, 0.0, -2.0 * x1, 0.0
    if kind == KIND_TIDAL_PARABOLIC:
        return 0.25 * x1 + math.sin(math.pi * t / 2.0), -x1 * x1, 0.25, 0.0, -2.0 * x1, 0.0
    s = math.sin(math.pi * t / 2.0)
    return 0.25 * x1 + 0.1 * x2, -x1 * x1 - 0.5 * s * s, 0.25, 0.1, -2.0 * x1, 0.0


def builtin_time_partial(kind, t, x1, x2):
    if kind == KIND_STEADY_PARABOLIC:
        return 0.0, 0.0
    w = math.pi / 2.0
    if kind == KIND_TIDAL_PARABOLIC:
        return w * math.cos(w * t), 0.0
    # d/dt of -0.5 sin^2(wt) = -w sin(wt) cos(wt)
    return 0.0, -w * math.sin(w * t) * math.cos(w * t)


_builtin_eval = njit(cache=True, inline="always")(builtin_eval)


@njit(cache=True, error_model="numpy", inline="always")
def _sgn(z):
    if z > 0.0:
        return 1.0
    if z < 0.0:
        return -1.0
    return 0.0


@njit(cache=True, error_model="numpy")
def run_program(ops, args, t, x1, x2, stack):
    sp = 0
    for i in range(ops.shape[0]):
        op = ops[i]
        if op == fx.OP_CONST:
            stack[sp] = args[i]
            sp += 1
        elif op == fx.OP_T:
            stack[sp] = t
            sp += 1
        elif op == fx.OP_X1:
            stack[sp] = x1
            sp += 1
        elif op == fx.OP_X2:
            stack[sp] = x2
            sp += 1
        elif op == fx.OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op <= fx.OP_POW:
            b = stack[sp - 1]
            a = stack[sp - 2]
            sp -= 1
            if op == fx.OP_ADD:
                r = a + b
            elif op == fx.OP_SUB:
                r = a - b
            elif op == fx.OP_MUL:
                r = a * b
            elif op == fx.OP_DIV:
                r = a / b if b != 0.0 else np.nan
            else:
                r = a**b
            stack[sp - 1] = r
        else:
            z = stack[sp - 1]
            if op == 10:
                r = math.sin(z)
            elif op == 11:
                r = math.cos(z)
            elif op == 12:
                r = math.tan(z)
            elif op == 13:
                r = math.exp(z)
            elif op == 14:
                r = math.log(z) if z > 0.0 else np.nan
            elif op == 15:
                r = math.sqrt(z) if z >= 0.0 else np.nan
            elif op == 16:
                r = abs(z)
            else:
                r = _sgn(z)
            stack[sp - 1] = r
    return stack[0]


@njit(cache=True, error_model="numpy")
def _fd_step(z):
    return FD_STEP * max(1.0, abs(z))


@njit(cache=True, error_model="numpy")
def _feval_builtin(t, x1, x2, data):
    return _builtin_eval(data[0], t, x1, x2)


@njit(cache=True, error_model="numpy")
def _feval_expression(t, x1, x2, data):
    _, ops_x, args_x, ops_y, args_y, stack = data
    v1 = run_program(ops_x, args_x, t, x1, x2, stack)
    v2 = run_program(ops_y, args_y, t, x1, x2, stack)
    h1 = _fd_step(x1)
    h2 = _fd_step(x2)
    a11 = (
        run_program(ops_x, args_x, t, x1 + h1, x2, stack)
        - run_program(ops_x, args_x, t, x1 - h1, x2, stack)
    ) / (2.0 * h1)
    a12 = (
        run_program(ops_x, args_x, t, x1, x2 + h2, stack)
        - run_program(ops_x, args_x, t, x1, x2 - h2, stack)
    ) / (2.0 * h2)
    a21 = (
        run_program(ops_y, args_y, t, x1 + h1, x2, stack)
        - run_program(ops_y, args_y, t, x1 - h1, x2, stack)
    ) / (2.0 * h1)
    a22 = (
        run_program(ops_y, args_y, t, x1, x2 + h2, stack)
        - run_program(ops_y, args_y, t, x1, x2 - h2, stack)
    ) / (2.0 * h2)
    return v1, v2, a11, a12, a21, a22


@njit(cache=True, error_model="numpy", inline="always")
def _lerp(a, b, s):
    return a + s * (b - a)


@njit(cache=True, error_model="numpy")
def _path_point(s, ax1, ax2, bx1, bx2, cx1, cx2):
    if s <= 1.0:
        return _lerp(ax1, bx1, s), _lerp(ax2, bx2, s)
    return _lerp(bx1, cx1, s - 1.0), _lerp(bx2, cx2, s - 1.0)


@njit(cache=True, error_model="numpy")
def _path_dist(s, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2):
    px, py = _path_point(s, ax1, ax2, bx1, bx2, cx1, cx2)
    return math.hypot(px - b1, py - b2)


@njit(cache=True, error_model="numpy")
def golden_min(ax1, ax2, bx1, bx2, cx1, cx2, b1, b2):
    """Minimise the distance to B over the two-segment path A-B-C, s in [0, 2]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo = 0.0
    hi = 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = _path_dist(c, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2)
    fd = _path_dist(d, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2)
    while hi - lo > 1e-12:
        if fc < fd:
            hi = d
            d = c
            fd = fc
            c = hi - invphi * (hi - lo)
            fc = _path_dist(c, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + invphi * (hi - lo)
            fd = _path_dist(d, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2)
    s = 0.5 * (lo + hi)
    return s, _path_dist(s, ax1, ax2, bx1, bx2, cx1, cx2, b1, b2)


def _make_kernel(feval):
    """Build the integrator specialised on a field evaluator ``feval(t, x1, x2, data)``."""

    @njit(error_model="numpy", inline="always")
    def _deriv(data, t, x1, x2, p1, p2, mu, side, u1, u2):
        v1, v2, a11, a12, a21, a22 = feval(t, x1, x2, data)
        if side != 0:
            m = p1
            dx1 = 0.0
        else:
            m = mu
            dx1 = u1 + v1
        dx2 = u2 + v2
        dp1 = -(p1 * a11 + p2 * a21) + m * a11
        dp2 = -(p1 * a12 + p2 * a22) + m * a12
        return dx1, dx2, dp1, dp2

    @njit(error_model="numpy", inline="always")
    def rk4(data, t, x1, x2, p1, p2, mu, side, u1, u2, tau):
        """One classical RK4 step with the control held at ``(u1, u2)``."""
        h = tau
        k1 = _deriv(data, t, x1, x2, p1, p2, mu, side, u1, u2)
        k2 = _deriv(
            data, t + 0.5 * h,
            x1 + 0.5 * h * k1[0], x2 + 0.5 * h * k1[1],
            p1 + 0.5 * h * k1[2], p2 + 0.5 * h * k1[3], mu, side, u1, u2,
        )
        k3 = _deriv(
            data, t + 0.5 * h,
            x1 + 0.5 * h * k2[0], x2 + 0.5 * h * k2[1],
            p1 + 0.5 * h * k2[2], p2 + 0.5 * h * k2[3], mu, side, u1, u2,
        )
        k4 = _deriv(
            data, t + h,
            x1 + h * k3[0], x2 + h * k3[1],
            p1 + h * k3[2], p2 + h * k3[3], mu, side, u1, u2,
        )
        c = h / 6.0
        nx1 = x1 + c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        nx2 = x2 + c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        np1 = p1 + c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        np2 = p2 + c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        nmu = mu
        if side != 0:
            # dx1 = 0 on the boundary: keep the pinned coordinate bit-exact
            nx1 = x1
            nmu = np1
        return nx1, nx2, np1, np2, nmu

    @njit(error_model="numpy", inline="always")
    def control(data, t, x1, x2, p1, p2, mu, side, eps):
        """Maximum-condition control; returns (u1, u2, singular_u1, singular_u2)."""
        z2 = p2
        if abs(z2) <= eps:
            u2 = 0.0
            s2 = True
        else:
            u2 = _sgn(z2)
            s2 = False
        if side != 0:
            v = feval(t, x1, x2, data)
            return -v[0], u2, False, s2
        z1 = p1 - mu
        if abs(z1) <= eps:
            return 0.0, u2, True, s2
        return _sgn(z1), u2, False, s2

    @njit(error_model="numpy")
    def run(
        data,
        t, x1, x2, p1, p2, mu, side,
        tau, b1, b2, term_tol, x2_lo, x2_hi, t_max, eps,
        commit_u1, commit_window, record, max_steps, bound,
    ):
        """Integrate from the given state until the first event.

        Returns ``(code, event_side, event_state, closest, rec, n_rec)`` where
        ``event_state`` is ``[t, x1, x2, psi1, psi2, mu]``, ``closest`` is
        ``[distance, x1, x2, t]`` of the closest approach to B seen so far and
        ``rec[:n_rec]`` holds one row per step boundary plus the event row when
        ``record`` is true.
        """
        cap = max_steps + 2 if record else 1
        rec = np.empty((cap, NCOL))
        n = 0
        ev = np.empty(6)
        closest = np.empty(4)

        d_cur = math.hypot(x1 - b1, x2 - b2)
        closest[0] = d_cur
        closest[1] = x1
        closest[2] = x2
        closest[3] = t
        # previous sample (for terminal bracketing)
        have_prev = False
        qt = qx1 = qx2 = qp1 = qp2 = qmu = 0.0
        d_prev = np.inf

        committed = commit_u1
        steps = 0
        code = EV_NONE
        ev_side = 0
        u1 = u2 = 0.0
        while True:
            if steps >= max_steps:
                code = EV_STEP_LIMIT
                break
            # control for this step
            if side != 0:
                v = feval(t, x1, x2, data)
                if abs(v[0]) >= 1.0:
                    code = EV_FORCED_DEPARTURE
                    ev_side = side
                    break
                u1 = -v[0]
                u2 = _sgn(p2) if abs(p2) > eps else 0.0
            else:
                u1, u2, s1, s2 = control(data, t, x1, x2, p1, p2, mu, 0, eps)
                if committed != 0:
                    if u1 == committed:
                        committed = 0
                    elif u1 == -committed:
                        code = EV_INCONSISTENT_DEPARTURE
                        break
                    elif steps >= commit_window:
                        committed = 0
                    else:
                        u1 = float(committed)
            if record:
                rec[n, 0] = t
                rec[n, 1] = x1
                rec[n, 2] = x2
                rec[n, 3] = p1
                rec[n, 4] = p2
                rec[n, 5] = mu
                rec[n, 6] = u1
                rec[n, 7] = u2
                rec[n, 8] = side
                n += 1

            nx1, nx2, np1, np2, nmu = rk4(
                data, t, x1, x2, p1, p2, mu, side, u1, u2, tau
            )
            nt = t + tau
            steps += 1
            if not (
                math.isfinite(nx1) and math.isfinite(nx2) and math.isfinite(np1)
                and math.isfinite(np2) and math.isfinite(nmu)
            ):
                code = EV_NON_FINITE
                break

            if side == 1 and nmu > mu + MONOTONE_SLACK:
                code = EV_MONOTONICITY_VIOLATION
                ev_side = side
                break
            if side == -1 and nmu < mu - MONOTONE_SLACK:
                code = EV_MONOTONICITY_VIOLATION
                ev_side = side
                break

            # boundary crossing (interior arcs only)
            if side == 0 and abs(nx1) > bound and abs(x1) <= bound:
                hit = 1 if nx1 > 0.0 else -1
                s = (hit * bound - x1) / (nx1 - x1)
                t = _lerp(t, nt, s)
                x2 = _lerp(x2, nx2, s)
                p1 = _lerp(p1, np1, s)
                p2 = _lerp(p2, np2, s)
                x1 = hit * bound
                d_new = math.hypot(x1 - b1, x2 - b2)
                if d_new < closest[0]:
                    closest[0] = d_new
                    closest[1] = x1
                    closest[2] = x2
                    closest[3] = t
                code = EV_BOUNDARY_HIT
                ev_side = hit
                break

            d_new = math.hypot(nx1 - b1, nx2 - b2)
            if d_new < closest[0]:
                closest[0] = d_new
                closest[1] = nx1
                closest[2] = nx2
                closest[3] = nt
            if have_prev and d_cur <= d_prev and d_cur <= d_new and d_cur < 10.0 * term_tol + 2.0 * tau * 4.0:
                s, dmin = golden_min(qx1, qx2, x1, x2, nx1, nx2, b1, b2)
                if dmin < closest[0]:
                    px, py = _path_point(s, qx1, qx2, x1, x2, nx1, nx2)
                    closest[0] = dmin
                    closest[1] = px
                    closest[2] = py
                    closest[3] = qt + s * tau
                if dmin < term_tol:
                    # interpolate the full state at the minimiser
                    if s <= 1.0:
                        t_e = _lerp(qt, t, s)
                        ev[1], ev[2] = _lerp(qx1, x1, s), _lerp(qx2, x2, s)
                        ev[3], ev[4], ev[5] = _lerp(qp1, p1, s), _lerp(qp2, p2, s), _lerp(qmu, mu, s)
                    else:
                        r = s - 1.0
                        t_e = _lerp(t, nt, r)
                        ev[1], ev[2] = _lerp(x1, nx1, r), _lerp(x2, nx2, r)
                        ev[3], ev[4], ev[5] = _lerp(p1, np1, r), _lerp(p2, np2, r), _lerp(mu, nmu, r)
                    ev[0] = t_e
                    if record and s <= 1.0:
                        # the minimiser lies before the last stored row
                        n -= 1
                        rec[n, 0] = t_e
                        rec[n, 1] = ev[1]
                        rec[n, 2] = ev[2]
                        rec[n, 3] = ev[3]
                        rec[n, 4] = ev[4]
                        rec[n, 5] = ev[5]
                        rec[n, 8] = side
                        n += 1
                        return EV_TERMINAL_HIT, side, ev, closest, rec, n
                    if record:
                        rec[n, 0] = t_e
                        rec[n, 1] = ev[1]
                        rec[n, 2] = ev[2]
                        rec[n, 3] = ev[3]
                        rec[n, 4] = ev[4]
                        rec[n, 5] = ev[5]
                        rec[n, 6] = u1
                        rec[n, 7] = u2
                        rec[n, 8] = side
                        n += 1
                    return EV_TERMINAL_HIT, side, ev, closest, rec, n

            have_prev = True
            qt, qx1, qx2, qp1, qp2, qmu = t, x1, x2, p1, p2, mu
            d_prev = d_cur
            d_cur = d_new
            t, x1, x2, p1, p2, mu = nt, nx1, nx2, np1, np2, nmu

            if x2 < x2_lo or x2 > x2_hi:
                code = EV_DOMAIN_EXIT
                break
            if t > t_max:
                code = EV_HORIZON
                break

        ev[0] = t
        ev[1] = x1
        ev[2] = x2
        ev[3] = p1
        ev[4] = p2
        ev[5] = mu
        # non-finite and monotonicity stops leave the state at the last stored row
        if record and code != EV_NON_FINITE and code != EV_MONOTONICITY_VIOLATION:
            rec[n, 0] = t
            rec[n, 1] = x1
            rec[n, 2] = x2
            rec[n, 3] = p1
            rec[n, 4] = p2
            rec[n, 5] = mu
            rec[n, 6] = u1
            rec[n, 7] = u2
            rec[n, 8] = side if code != EV_BOUNDARY_HIT else 0
            n += 1
        return code, ev_side, ev, closest, rec, n


    return rk4, control, run


rk4_builtin, control_builtin, run_builtin = _make_kernel(_feval_builtin)
rk4_expression, control_expression, run_expression = _make_kernel(_feval_expression)


def field_data(kind, programs):
    """Pack a field's identity into the ``data`` tuple the kernels expect."""
    ops_x, args_x, ops_y, args_y = programs
    return (kind, ops_x, args_x, ops_y, args_y, np.empty(64))


def kernels(kind):
    if kind == KIND_EXPRESSION:
        return rk4_expression, control_expression, run_expression
    return rk4_builtin, control_builtin, run_builtin
