# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled adaptive Runge-Kutta stepping loop for the geodesic system.

Hot kernel of the geodesic engine.  The arithmetic mirrors
``_stepper_py.py`` exactly (same expression structure, same
accumulation order, same libm calls), so the two backends produce
bit-identical trajectories; ``cdivision`` only affects integer
division, which is not used here.
"""

from libc.math cimport fabs, sin, cos, sqrt, pow

import numpy as np

BACKEND_NAME = "compiled"

STATUS_DONE = 0
STATUS_GUARD = 1
STATUS_UNDERFLOW = 2
STATUS_MAX_STEPS = 3

cdef double _SAFETY = 0.9
cdef double _MIN_FACTOR = 0.2
cdef double _MAX_FACTOR = 10.0

cdef double _A21 = 1.0 / 5.0
cdef double _A31 = 3.0 / 40.0
cdef double _A32 = 9.0 / 40.0
cdef double _A41 = 44.0 / 45.0
cdef double _A42 = -56.0 / 15.0
cdef double _A43 = 32.0 / 9.0
cdef double _A51 = 19372.0 / 6561.0
cdef double _A52 = -25360.0 / 2187.0
cdef double _A53 = 64448.0 / 6561.0
cdef double _A54 = -212.0 / 729.0
cdef double _A61 = 9017.0 / 3168.0
cdef double _A62 = -355.0 / 33.0
cdef double _A63 = 46732.0 / 5247.0
cdef double _A64 = 49.0 / 176.0
cdef double _A65 = -5103.0 / 18656.0
cdef double _B1 = 35.0 / 384.0
cdef double _B3 = 500.0 / 1113.0
cdef double _B4 = 125.0 / 192.0
cdef double _B5 = -2187.0 / 6784.0
cdef double _B6 = 11.0 / 84.0
cdef double _E1 = 71.0 / 57600.0
cdef double _E3 = -71.0 / 16695.0
cdef double _E4 = 71.0 / 1920.0
cdef double _E5 = -17253.0 / 339200.0
cdef double _E6 = 22.0 / 525.0
cdef double _E7 = -1.0 / 40.0


cdef inline void _rhs(double* y, double* f) nogil:
    cdef double r = y[1]
    cdef double theta = y[2]
    cdef double u_t = y[4]
    cdef double u_r = y[5]
    cdef double u_th = y[6]
    cdef double u_ph = y[7]
    cdef double st = sin(theta)
    cdef double ct = cos(theta)
    cdef double b
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


cdef inline double _rms_scaled(double* e, double* y0, double* y1,
                               double rtol, double atol) nogil:
    cdef double acc = 0.0
    cdef double ay0, ay1, big, sc, q
    cdef int i
    for i in range(8):
        ay0 = -y0[i] if y0[i] < 0.0 else y0[i]
        ay1 = -y1[i] if y1[i] < 0.0 else y1[i]
        big = ay0 if ay0 > ay1 else ay1
        sc = atol + rtol * big
        q = e[i] / sc
        acc += q * q
    return sqrt(acc / 8.0)


cdef double _initial_step(double* y0, double* f0, double s_span,
                          double rtol, double atol) nogil:
    cdef double d0 = 0.0
    cdef double d1 = 0.0
    cdef double d2 = 0.0
    cdef double ay, sc, q0, q1, q, h0, h1, h
    cdef double y1[8]
    cdef double f1[8]
    cdef int i
    for i in range(8):
        ay = -y0[i] if y0[i] < 0.0 else y0[i]
        sc = atol + rtol * ay
        q0 = y0[i] / sc
        q1 = f0[i] / sc
        d0 += q0 * q0
        d1 += q1 * q1
    d0 = sqrt(d0 / 8.0)
    d1 = sqrt(d1 / 8.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for i in range(8):
        y1[i] = y0[i] + h0 * f0[i]
    _rhs(y1, f1)
    for i in range(8):
        ay = -y0[i] if y0[i] < 0.0 else y0[i]
        sc = atol + rtol * ay
        q = (f1[i] - f0[i]) / sc
        d2 += q * q
    d2 = sqrt(d2 / 8.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = 1e-6 if h0 * 1e-3 < 1e-6 else h0 * 1e-3
    else:
        h1 = pow(0.01 / (d1 if d1 > d2 else d2), 0.2)
    h = h0 * 100.0
    if h1 < h:
        h = h1
    if s_span < h:
        h = s_span
    return h


def rhs_probe(y0):
    """Evaluate the kernel right-hand side once (parity testing hook)."""
    cdef double y[8]
    cdef double f[8]
    cdef int i
    for i in range(8):
        y[i] = float(y0[i])
    _rhs(y, f)
    return [f[i] for i in range(8)]


def integrate_raw(y0, double s0, double s_end, double rtol, double atol,
                  double r_floor, double sin_floor, long max_steps):
    """Integrate from ``s0`` to ``s_end``; returns (status, s, y, k).

    Same contract as the pure-Python twin.
    """
    cdef double y[8]
    cdef double f[8]
    cdef double k1[8]
    cdef double k2[8]
    cdef double k3[8]
    cdef double k4[8]
    cdef double k5[8]
    cdef double k6[8]
    cdef double k7[8]
    cdef double yt[8]
    cdef double ynew[8]
    cdef double err_vec[8]
    cdef double s, h, hmin, h_step, err, factor, tmp
    cdef long steps = 0
    cdef long cap = 1024
    cdef long n = 0
    cdef int i, status
    cdef bint rejected = False
    cdef bint clamped

    for i in range(8):
        y[i] = float(y0[i])
    _rhs(y, f)
    for i in range(8):
        k1[i] = f[i]

    s_buf = np.empty(cap, dtype=np.float64)
    y_buf = np.empty((cap, 8), dtype=np.float64)
    k_buf = np.empty((cap, 7, 8), dtype=np.float64)
    cdef double[::1] s_mv = s_buf
    cdef double[:, ::1] y_mv = y_buf
    cdef double[:, :, ::1] k_mv = k_buf

    s = s0
    s_mv[0] = s
    for i in range(8):
        y_mv[0, i] = y[i]
    n = 1

    h = _initial_step(y, f, s_end - s0, rtol, atol)
    status = STATUS_MAX_STEPS

    while steps < max_steps:
        if s >= s_end:
            status = STATUS_DONE
            break
        tmp = fabs(s) if fabs(s) > fabs(s_end) else fabs(s_end)
        if tmp < 1.0:
            tmp = 1.0
        hmin = 16.0 * 2.220446049250313e-16 * tmp
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

        if err != err or err > 1.0:
            if err != err:
                factor = _MIN_FACTOR
            else:
                factor = _SAFETY * pow(err, -0.2)
                if factor < _MIN_FACTOR:
                    factor = _MIN_FACTOR
            h = h_step * factor
            rejected = True
            steps += 1
            continue

        if err == 0.0:
            factor = _MAX_FACTOR
        else:
            factor = _SAFETY * pow(err, -0.2)
            if factor > _MAX_FACTOR:
                factor = _MAX_FACTOR
        if rejected and factor > 1.0:
            factor = 1.0
        rejected = False

        s = s_end if clamped else s + h_step

        if n >= cap:
            cap = cap * 2
            s_new_buf = np.empty(cap, dtype=np.float64)
            y_new_buf = np.empty((cap, 8), dtype=np.float64)
            k_new_buf = np.empty((cap, 7, 8), dtype=np.float64)
            s_new_buf[:n] = s_buf[:n]
            y_new_buf[:n] = y_buf[:n]
            k_new_buf[: n - 1] = k_buf[: n - 1]
            s_buf, y_buf, k_buf = s_new_buf, y_new_buf, k_new_buf
            s_mv = s_buf
            y_mv = y_buf
            k_mv = k_buf

        for i in range(8):
            k_mv[n - 1, 0, i] = k1[i]
            k_mv[n - 1, 1, i] = k2[i]
            k_mv[n - 1, 2, i] = k3[i]
            k_mv[n - 1, 3, i] = k4[i]
            k_mv[n - 1, 4, i] = k5[i]
            k_mv[n - 1, 5, i] = k6[i]
            k_mv[n - 1, 6, i] = k7[i]
            y[i] = ynew[i]
        s_mv[n] = s
        for i in range(8):
            y_mv[n, i] = y[i]
        n += 1
        for i in range(8):
            k1[i] = k7[i]  # FSAL
        h = h_step * factor
        steps += 1

        if y[1] < r_floor or sin(y[2]) < sin_floor:
            status = STATUS_GUARD
            break

    if s >= s_end and status == STATUS_MAX_STEPS:
        status = STATUS_DONE

    return (
        status,
        s_buf[:n].copy(),
        y_buf[:n].copy(),
        k_buf[: n - 1].copy(),
    )
