"""Compiled inner loops: per-mode Dormand-Prince 5(4) and sparse RK4."""

import os
from math import asinh, atan2, cos, sin, sqrt

import numba
import numpy as np

# The TBB layer is probed first by default and warns when the system TBB is
# too old; use the built-in workqueue layer unless the user chose one.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAXSTEPS = 2


@numba.njit(cache=True)
def gap_primitive(g, c, s):
    """Antiderivative in g of sqrt((g - c)^2 + s^2)."""
    x = g - c
    e = sqrt(x * x + s * s)
    r = x * e
    if s != 0.0:
        r += s * s * asinh(x / abs(s))
    return 0.5 * r


#: Modes with |sin k| * tau_q below this are integrated in the diabatic frame
DIABATIC_SWITCH = 1e-3

ADIABATIC = 0
DIABATIC = 1


@numba.njit(cache=True)
def _dynamical_phase(t, tau_q, c, s, e0):
    # int_{t0}^{t} 2 eps dt' with g = -t/tau_q
    return 2.0 * tau_q * (e0 - gap_primitive(-t / tau_q, c, s))


@numba.njit(cache=True)
def _diagonal_phase(t, t0, tau_q, c):
    # int_{t0}^{t} 2 (g - cos k) dt' with g = -t/tau_q
    return -(t * t - t0 * t0) / tau_q - 2.0 * c * (t - t0)


@numba.njit(cache=True)
def _frame_rhs(frame, t, t0, tau_q, c, s, e0, a, b):
    if frame == DIABATIC:
        # interaction picture w.r.t. the diagonal part: a' = -2is e^{2i phi_d} b
        phi = _diagonal_phase(t, t0, tau_q, c)
        rot = complex(cos(2.0 * phi), sin(2.0 * phi))
        return -2j * s * rot * b, -2j * s * rot.conjugate() * a
    # adiabatic frame: a' = (theta'/2) e^{2i phi} b, b' = -(theta'/2) e^{-2i phi} a
    g = -t / tau_q
    x = g - c
    e2 = x * x + s * s
    half_rate = 0.5 * s / (tau_q * e2) if e2 > 0.0 else 0.0
    phi = _dynamical_phase(t, tau_q, c, s, e0)
    rot = complex(cos(2.0 * phi), sin(2.0 * phi))
    return half_rate * rot * b, -half_rate * rot.conjugate() * a


@numba.njit(cache=True)
def _from_lab(frame, t, tau_q, c, s, u, v):
    if frame == DIABATIC:
        return u, v
    th = atan2(s, -t / tau_q - c)
    ch, sh = cos(0.5 * th), sin(0.5 * th)
    return ch * u + sh * v, -sh * u + ch * v


@numba.njit(cache=True)
def _to_lab(frame, t, t0, tau_q, c, s, e0, a, b):
    if frame == DIABATIC:
        phi = _diagonal_phase(t, t0, tau_q, c)
        ep = complex(cos(phi), -sin(phi))
        return a * ep, b * ep.conjugate()
    g = -t / tau_q
    th = atan2(s, g - c)
    phi = _dynamical_phase(t, tau_q, c, s, e0)
    ep = complex(cos(phi), -sin(phi))
    ch, sh = cos(0.5 * th), sin(0.5 * th)
    em = ep.conjugate()
    return a * ep * ch - b * em * sh, a * ep * sh + b * em * ch


@numba.njit(cache=True)
def _integrate_one(k, tau_q, t0, ts, rtol, atol, u0, v0, max_steps, U, V, j):
    c = cos(k)
    s = sin(k)
    frame = DIABATIC if abs(s) * tau_q < DIABATIC_SWITCH else ADIABATIC
    e0 = gap_primitive(-t0 / tau_q, c, s)
    a, b = _from_lab(frame, t0, tau_q, c, s, u0, v0)
    t = t0
    span = abs(ts[-1] - t0)
    h = min(1e-2, span) if span > 0 else 1e-2
    k1a, k1b = _frame_rhs(frame, t, t0, tau_q, c, s, e0, a, b)
    steps = 0
    for i in range(ts.size):
        tend = ts[i]
        while t < tend:
            last = t + h >= tend
            hh = tend - t if last else h
            if hh < 1e-14 * max(1.0, abs(t)):
                return STATUS_UNDERFLOW, steps
            if steps >= max_steps:
                return STATUS_MAXSTEPS, steps
            k2a, k2b = _frame_rhs(frame, t + _C2 * hh, t0, tau_q, c, s, e0,
                                  a + hh * _A21 * k1a, b + hh * _A21 * k1b)
            k3a, k3b = _frame_rhs(frame, t + _C3 * hh, t0, tau_q, c, s, e0,
                                  a + hh * (_A31 * k1a + _A32 * k2a),
                                  b + hh * (_A31 * k1b + _A32 * k2b))
            k4a, k4b = _frame_rhs(frame, t + _C4 * hh, t0, tau_q, c, s, e0,
                                  a + hh * (_A41 * k1a + _A42 * k2a + _A43 * k3a),
                                  b + hh * (_A41 * k1b + _A42 * k2b + _A43 * k3b))
            k5a, k5b = _frame_rhs(frame, t + _C5 * hh, t0, tau_q, c, s, e0,
                                  a + hh * (_A51 * k1a + _A52 * k2a + _A53 * k3a + _A54 * k4a),
                                  b + hh * (_A51 * k1b + _A52 * k2b + _A53 * k3b + _A54 * k4b))
            k6a, k6b = _frame_rhs(frame, t + hh, t0, tau_q, c, s, e0,
                                  a + hh * (_A61 * k1a + _A62 * k2a + _A63 * k3a + _A64 * k4a + _A65 * k5a),
                                  b + hh * (_A61 * k1b + _A62 * k2b + _A63 * k3b + _A64 * k4b + _A65 * k5b))
            an = a + hh * (_B1 * k1a + _B3 * k3a + _B4 * k4a + _B5 * k5a + _B6 * k6a)
            bn = b + hh * (_B1 * k1b + _B3 * k3b + _B4 * k4b + _B5 * k5b + _B6 * k6b)
            tn = tend if last else t + hh
            k7a, k7b = _frame_rhs(frame, tn, t0, tau_q, c, s, e0, an, bn)
            ea = hh * (_E1 * k1a + _E3 * k3a + _E4 * k4a + _E5 * k5a + _E6 * k6a + _E7 * k7a)
            eb = hh * (_E1 * k1b + _E3 * k3b + _E4 * k4b + _E5 * k5b + _E6 * k6b + _E7 * k7b)
            # error scaled by the mode norm, which is conserved
            scale = atol + rtol * max(sqrt(abs(a) ** 2 + abs(b) ** 2), sqrt(abs(an) ** 2 + abs(bn) ** 2))
            err = sqrt(0.5 * (abs(ea) ** 2 + abs(eb) ** 2)) / scale
            steps += 1
            if err <= 1.0:
                t = tn
                a = an
                b = bn
                k1a = k7a
                k1b = k7b
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not last or fac < 1.0:
                    h = hh * fac
            else:
                h = hh * max(0.2, 0.9 * err ** -0.2)
        U[i, j], V[i, j] = _to_lab(frame, t, t0, tau_q, c, s, e0, a, b)
    return STATUS_OK, steps


@numba.njit(cache=True, parallel=True)
def integrate_modes(ks, tau_q, t0, ts, rtol, atol, u0, v0, max_steps):
    """Evolve every momentum mode through the linear ramp g = -t/tau_q.

    Works in the instantaneous eigenbasis with the dynamical phase removed
    analytically.  Modes so close to k = 0 or pi that the avoided crossing
    is sharper than any resolvable step use the interaction picture of the
    diagonal part instead.  Returns lab-frame (u, v) at each sample time.
    """
    nk = ks.size
    U = np.empty((ts.size, nk), np.complex128)
    V = np.empty((ts.size, nk), np.complex128)
    status = np.zeros(nk, np.int64)
    steps = np.zeros(nk, np.int64)
    for j in numba.prange(nk):
        st, n = _integrate_one(ks[j], tau_q, t0, ts, rtol, atol, u0[j], v0[j], max_steps, U, V, j)
        status[j] = st
        steps[j] = n
    return U, V, status, steps


@numba.njit(cache=True)
def _csr_apply(data, indices, indptr, x, out, coef):
    for r in range(indptr.size - 1):
        acc = 0j
        for p in range(indptr[r], indptr[r + 1]):
            acc += data[p] * x[indices[p]]
        out[r] += coef * acc


@numba.njit(cache=True)
def _shifted_action(ad, ai, ap, bd, bi, bp, g, shift, psi, out):
    # out = -i (g A + B - shift) psi
    for r in range(out.size):
        out[r] = -shift * psi[r]
    _csr_apply(ad, ai, ap, psi, out, g)
    _csr_apply(bd, bi, bp, psi, out, 1.0)
    for r in range(out.size):
        out[r] = -1j * out[r]


@numba.njit(cache=True)
def rk4_segment(ad, ai, ap, bd, bi, bp, g0, g_rate, shift_a, shift_b, psi, t0, t1, dt):
    """Fixed-step RK4 for H(t) = g(t) A + B - c(t), g(t) = g0 + g_rate t.

    c(t) = shift_a g(t) + shift_b is a scalar energy offset that keeps the
    integrated phases small; the caller restores the global phase.
    """
    n = psi.size
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    tmp = np.empty(n, np.complex128)
    y = psi.copy()
    t = t0
    nsteps = int(np.ceil((t1 - t0) / dt - 1e-12)) if t1 > t0 else 0
    for m in range(nsteps):
        h = (t1 - t0) / nsteps
        t = t0 + m * h
        ga = g0 + g_rate * t
        gm = g0 + g_rate * (t + 0.5 * h)
        gb = g0 + g_rate * (t + h)
        _shifted_action(ad, ai, ap, bd, bi, bp, ga, shift_a * ga + shift_b, y, k1)
        for r in range(n):
            tmp[r] = y[r] + 0.5 * h * k1[r]
        _shifted_action(ad, ai, ap, bd, bi, bp, gm, shift_a * gm + shift_b, tmp, k2)
        for r in range(n):
            tmp[r] = y[r] + 0.5 * h * k2[r]
        _shifted_action(ad, ai, ap, bd, bi, bp, gm, shift_a * gm + shift_b, tmp, k3)
        for r in range(n):
            tmp[r] = y[r] + h * k3[r]
        _shifted_action(ad, ai, ap, bd, bi, bp, gb, shift_a * gb + shift_b, tmp, k4)
        for r in range(n):
            y[r] += h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
    return y
