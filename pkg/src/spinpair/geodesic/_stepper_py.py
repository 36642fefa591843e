"""Pure-Python adaptive Runge-Kutta stepping loop for the geodesic system.

Fallback used when the compiled extension is unavailable.  The
arithmetic (expression structure, accumulation order, libm calls)
mirrors ``_stepper_c.pyx`` exactly so both backends produce identical
trajectories bit for bit.

Dormand-Prince 5(4) embedded pair with FSAL, PI-free standard step
control and stored stage derivatives for quartic dense output.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "python"

STATUS_DONE = 0
STATUS_GUARD = 1
STATUS_UNDERFLOW = 2
STATUS_MAX_STEPS = 3

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

_C2 = 1.0 / 5.0
_C3 = 3.0 / 10.0
_C4 = 4.0 / 5.0
_C5 = 8.0 / 9.0

_A21 = 1.0 / 5.0
_A31 = 3.0 / 40.0
_A32 = 9.0 / 40.0
_A41 = 44.0 / 45.0
_A42 = -56.0 / 15.0
_A43 = 32.0 / 9.0
_A51 = 19372.0 / 6561.0
_A52 = -25360.0 / 2187.0
_A53 = 64448.0 / 6561.0
_A54 = -212.0 / 729.0
_A61 = 9017.0 / 3168.0
_A62 = -355.0 / 33.0
_A63 = 46732.0 / 5247.0
_A64 = 49.0 / 176.0
_A65 = -5103.0 / 18656.0
_B1 = 35.0 / 384.0
_B3 = 500.0 / 1113.0
_B4 = 125.0 / 192.0
_B5 = -2187.0 / 6784.0
_B6 = 11.0 / 84.0
_E1 = 71.0 / 57600.0
_E3 = -71.0 / 16695.0
_E4 = 71.0 / 1920.0
_E5 = -17253.0 / 339200.0
_E6 = 22.0 / 525.0
_E7 = -1.0 / 40.0


def _rhs(y, f):
    """Geodesic right-hand side; y and f are length-8 lists."""
    r = y[1]
    theta = y[2]
    u_t = y[4]
    u_r = y[5]
    u_th = y[6]
    u_ph = y[7]
    st = math.sin(theta)
    ct = math.cos(theta)
    if st == 0.0:
        st = 1e-300
    b = st * (u_t - r * u_ph)
    f[0] = u_t
    f[1] = u_r
    f[2] = u_th
    f[3] = u_ph
    f[4] = -u_r * st * b / r
    f[5] = ((r * u_th) * (r * u_th) - (r * u_ph * st) * b) / r
    f[6] = (-2.0 * u_r * (r * u_th) + (ct / st) * b * b) / (r * r)
    f[7] = (
        -u_r * (r * u_ph * st) + u_r * ct * ct * b + 2.0 * (ct / st) * (r * u_th) * b
    ) / (r * r * st)


def _rms_scaled(e, y0, y1, rtol, atol):
    acc = 0.0
    for i in range(8):
        ay0 = -y0[i] if y0[i] < 0.0 else y0[i]
        ay1 = -y1[i] if y1[i] < 0.0 else y1[i]
        big = ay0 if ay0 > ay1 else ay1
        sc = atol + rtol * big
        q = e[i] / sc
        acc += q * q
    return math.sqrt(acc / 8.0)


def _initial_step(y0, f0, s_span, rtol, atol):
    d0 = 0.0
    d1 = 0.0
    for i in range(8):
        ay = -y0[i] if y0[i] < 0.0 else y0[i]
        sc = atol + rtol * ay
        q0 = y0[i] / sc
        q1 = f0[i] / sc
        d0 += q0 * q0
        d1 += q1 * q1
    d0 = math.sqrt(d0 / 8.0)
    d1 = math.sqrt(d1 / 8.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = [y0[i] + h0 * f0[i] for i in range(8)]
    f1 = [0.0] * 8
    _rhs(y1, f1)
    d2 = 0.0
    for i in range(8):
        ay = -y0[i] if y0[i] < 0.0 else y0[i]
        sc = atol + rtol * ay
        q = (f1[i] - f0[i]) / sc
        d2 += q * q
    d2 = math.sqrt(d2 / 8.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = 1e-6 if h0 * 1e-3 < 1e-6 else h0 * 1e-3
    else:
        h1 = (0.01 / (d1 if d1 > d2 else d2)) ** 0.2
    h = h0 * 100.0
    if h1 < h:
        h = h1
    if s_span < h:
        h = s_span
    return h


def integrate_raw(y0, s0, s_end, rtol, atol, r_floor, sin_floor, max_steps):
    """Integrate from ``s0`` to ``s_end``; returns (status, s, y, k).

    ``s`` has the accepted sample parameters (first entry is ``s0``),
    ``y`` the states (n, 8) and ``k`` the per-step stage derivatives
    (n - 1, 7, 8) for dense output.
    """
    y = [float(v) for v in y0]
    f = [0.0] * 8
    _rhs(y, f)

    ss = [float(s0)]
    ys = [tuple(y)]
    ks = []

    h = _initial_step(y, f, s_end - s0, rtol, atol)
    s = float(s0)
    rejected = False
    status = STATUS_MAX_STEPS

    k1 = list(f)
    k2 = [0.0] * 8
    k3 = [0.0] * 8
    k4 = [0.0] * 8
    k5 = [0.0] * 8
    k6 = [0.0] * 8
    k7 = [0.0] * 8
    yt = [0.0] * 8
    ynew = [0.0] * 8
    err_vec = [0.0] * 8

    steps = 0
    while steps < max_steps:
        if s >= s_end:
            status = STATUS_DONE
            break
        hmin = 16.0 * 2.220446049250313e-16 * max(abs(s), abs(s_end), 1.0)
        if h < hmin:
            status = STATUS_UNDERFLOW
            break
        clamped = h >= s_end - s
        h_step = (s_end - s) if clamped else h

        for i in range(8):
            yt[i] = y[i] + h_step * (_A21 * k1[i])
        _rhs(yt, k2)
        for i in range(8):
            yt[i] = y[i] + h_step * (_A31 * k1[i] + _A32 * k2[i])
        _rhs(yt, k3)
        for i in range(8):
            yt[i] = y[i] + h_step * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
        _rhs(yt, k4)
        for i in range(8):
            yt[i] = y[i] + h_step * (
                _A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i]
            )
        _rhs(yt, k5)
        for i in range(8):
            yt[i] = y[i] + h_step * (
                _A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i]
            )
        _rhs(yt, k6)
        for i in range(8):
            ynew[i] = y[i] + h_step * (
                _B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i]
            )
        _rhs(ynew, k7)
        for i in range(8):
            err_vec[i] = h_step * (
                _E1 * k1[i]
                + _E3 * k3[i]
                + _E4 * k4[i]
                + _E5 * k5[i]
                + _E6 * k6[i]
                + _E7 * k7[i]
            )
        err = _rms_scaled(err_vec, y, ynew, rtol, atol)

        if err != err or err > 1.0:  # nan or too large: reject
            if err != err:
                factor = _MIN_FACTOR
            else:
                factor = _SAFETY * err**-0.2
                if factor < _MIN_FACTOR:
                    factor = _MIN_FACTOR
            h = h_step * factor
            rejected = True
            steps += 1
            continue

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * err**-0.2
            if factor > _MAX_FACTOR:
                factor = _MAX_FACTOR
        if rejected and factor > 1.0:
            factor = 1.0
        rejected = False

        s = s_end if clamped else s + h_step
        ks.append(
            (tuple(k1), tuple(k2), tuple(k3), tuple(k4), tuple(k5), tuple(k6), tuple(k7))
        )
        for i in range(8):
            y[i] = ynew[i]
        ss.append(s)
        ys.append(tuple(y))
        k1, k7 = k7, k1  # FSAL
        h = h_step * factor
        steps += 1

        if y[1] < r_floor or math.sin(y[2]) < sin_floor:
            status = STATUS_GUARD
            break

    if s >= s_end and status == STATUS_MAX_STEPS:
        status = STATUS_DONE

    return (
        status,
        np.array(ss, dtype=float),
        np.array(ys, dtype=float),
        np.array(ks, dtype=float).reshape(len(ks), 7, 8),
    )
