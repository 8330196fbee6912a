# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) integrator; same contract as ``_integrate_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt, pow, isfinite

cnp.import_array()

DEF C2 = 1.0 / 5.0
DEF C3 = 3.0 / 10.0
DEF C4 = 4.0 / 5.0
DEF C5 = 8.0 / 9.0
DEF A21 = 1.0 / 5.0
DEF A31 = 3.0 / 40.0
DEF A32 = 9.0 / 40.0
DEF A41 = 44.0 / 45.0
DEF A42 = -56.0 / 15.0
DEF A43 = 32.0 / 9.0
DEF A51 = 19372.0 / 6561.0
DEF A52 = -25360.0 / 2187.0
DEF A53 = 64448.0 / 6561.0
DEF A54 = -212.0 / 729.0
DEF A61 = 9017.0 / 3168.0
DEF A62 = -355.0 / 33.0
DEF A63 = 46732.0 / 5247.0
DEF A64 = 49.0 / 176.0
DEF A65 = -5103.0 / 18656.0
DEF B1 = 35.0 / 384.0
DEF B3 = 500.0 / 1113.0
DEF B4 = 125.0 / 192.0
DEF B5 = -2187.0 / 6784.0
DEF B6 = 11.0 / 84.0
DEF E1 = 71.0 / 57600.0
DEF E3 = -71.0 / 16695.0
DEF E4 = 71.0 / 1920.0
DEF E5 = -17253.0 / 339200.0
DEF E6 = 22.0 / 525.0
DEF E7 = -1.0 / 40.0

OK = 0
BLOWUP = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3


cdef inline double _rho2(double d, int kind, double gamma, double t0, double width) nogil:
    cdef double t, g, e
    if kind == 0:
        return 0.0
    t = (d - t0) / width
    if t <= 0.0 or t >= 1.0:
        return 0.0
    g = 1.0 / t - 1.0 / (1.0 - t)
    if g > 700.0 or g < -700.0:
        return 0.0
    e = exp(-fabs(g))
    return gamma / width * e / ((1.0 + e) * (1.0 + e)) * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))


cdef inline double _rhs(double R, double r, double rd, double M, int kind,
                        double gamma, double t0, double width) nogil:
    cdef double d = M * r * rd / R
    cdef double rho2 = _rho2(d, kind, gamma, t0, width)
    cdef double u = R * rd - r
    cdef double ddot = M * (u * u + (M * M - 1.0) * r * r) / (R * R * R + M * M * rho2 * r * r * R)
    return (M * M * r / R - rd - M * rho2 * ddot * r) / R


def rho_second_scalar(double d, int kind, double gamma, double t0, double width):
    return _rho2(d, kind, gamma, t0, width)


def rhs(double R, double r, double rd, double M, int kind, double gamma, double t0, double width):
    return _rhs(R, r, rd, M, kind, gamma, t0, width)


def integrate_mesh(mesh, double r0, double rd0, M, int kind, double gamma, double t0,
                   double width, double rtol, double atol, long max_steps=1000000):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(mesh, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r_out = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rd_out = np.full(n, np.nan)
    cdef double Mf = float(M)
    cdef double R = x[0], r = r0, rd = rd0
    cdef double fr, fd, h, h_prop = 0.0, target, direction, Rn
    cdef double k1r, k1d, k2r, k2d, k3r, k3d, k4r, k4d, k5r, k5d, k6r, k6d, k7r, k7d
    cdef double yr, yd, nr, nd, er, ed, scale, sc_r, sc_d, err, fac
    cdef long steps = 0
    cdef Py_ssize_t i
    cdef bint last
    r_out[0] = r0
    rd_out[0] = rd0
    fr = rd
    fd = _rhs(R, r, rd, Mf, kind, gamma, t0, width)
    with nogil:
        for i in range(1, n):
            target = x[i]
            direction = 1.0 if target > R else -1.0
            if h_prop == 0.0:
                h_prop = target - R
            else:
                h_prop = direction * fabs(h_prop)
            while True:
                h = h_prop
                last = False
                if direction * (R + h - target) >= 0.0:
                    h = target - R
                    last = True
                k1r = fr
                k1d = fd
                yr = r + h * A21 * k1r
                yd = rd + h * A21 * k1d
                k2r = yd
                k2d = _rhs(R + C2 * h, yr, yd, Mf, kind, gamma, t0, width)
                yr = r + h * (A31 * k1r + A32 * k2r)
                yd = rd + h * (A31 * k1d + A32 * k2d)
                k3r = yd
                k3d = _rhs(R + C3 * h, yr, yd, Mf, kind, gamma, t0, width)
                yr = r + h * (A41 * k1r + A42 * k2r + A43 * k3r)
                yd = rd + h * (A41 * k1d + A42 * k2d + A43 * k3d)
                k4r = yd
                k4d = _rhs(R + C4 * h, yr, yd, Mf, kind, gamma, t0, width)
                yr = r + h * (A51 * k1r + A52 * k2r + A53 * k3r + A54 * k4r)
                yd = rd + h * (A51 * k1d + A52 * k2d + A53 * k3d + A54 * k4d)
                k5r = yd
                k5d = _rhs(R + C5 * h, yr, yd, Mf, kind, gamma, t0, width)
                yr = r + h * (A61 * k1r + A62 * k2r + A63 * k3r + A64 * k4r + A65 * k5r)
                yd = rd + h * (A61 * k1d + A62 * k2d + A63 * k3d + A64 * k4d + A65 * k5d)
                if last:
                    Rn = target
                else:
                    Rn = R + h
                k6r = yd
                k6d = _rhs(Rn, yr, yd, Mf, kind, gamma, t0, width)
                nr = r + h * (B1 * k1r + B3 * k3r + B4 * k4r + B5 * k5r + B6 * k6r)
                nd = rd + h * (B1 * k1d + B3 * k3d + B4 * k4d + B5 * k5d + B6 * k6d)
                steps += 1
                if not (isfinite(nr) and isfinite(nd)):
                    with gil:
                        return r_out, rd_out, BLOWUP, steps
                k7r = nd
                k7d = _rhs(Rn, nr, nd, Mf, kind, gamma, t0, width)
                er = h * (E1 * k1r + E3 * k3r + E4 * k4r + E5 * k5r + E6 * k6r + E7 * k7r)
                ed = h * (E1 * k1d + E3 * k3d + E4 * k4d + E5 * k5d + E6 * k6d + E7 * k7d)
                scale = fabs(r)
                if fabs(nr) > scale:
                    scale = fabs(nr)
                if fabs(R * rd) > scale:
                    scale = fabs(R * rd)
                if fabs(Rn * nd) > scale:
                    scale = fabs(Rn * nd)
                sc_r = atol * scale + rtol * (fabs(r) if fabs(r) > fabs(nr) else fabs(nr))
                sc_d = atol * scale / fabs(Rn) + rtol * (fabs(rd) if fabs(rd) > fabs(nd) else fabs(nd))
                if sc_r == 0.0 and sc_d == 0.0:
                    err = 0.0
                else:
                    if sc_r > 0.0:
                        er = er / sc_r
                    elif er != 0.0:
                        er = 1e10
                    if sc_d > 0.0:
                        ed = ed / sc_d
                    elif ed != 0.0:
                        ed = 1e10
                    err = sqrt(0.5 * (er * er + ed * ed))
                if not isfinite(err):
                    err = 1e10
                if err <= 1.0:
                    R = Rn
                    r = nr
                    rd = nd
                    fr = k7r
                    fd = k7d
                    if err == 0.0:
                        fac = 5.0
                    else:
                        fac = 0.9 * pow(err, -0.2)
                        if fac < 0.2:
                            fac = 0.2
                        if fac > 5.0:
                            fac = 5.0
                    if last:
                        if fabs(h) * fac > fabs(h_prop):
                            h_prop = direction * fabs(h) * fac
                        else:
                            h_prop = direction * fabs(h_prop)
                        break
                    h_prop = h * fac
                else:
                    fac = 0.9 * pow(err, -0.2)
                    if fac < 0.2:
                        fac = 0.2
                    h_prop = h * fac
                    if fabs(h_prop) < 1e-15 * (fabs(R) if fabs(R) > 1e-300 else 1e-300):
                        with gil:
                            return r_out, rd_out, STEP_UNDERFLOW, steps
                if steps >= max_steps:
                    with gil:
                        return r_out, rd_out, MAX_STEPS, steps
            r_out[i] = r
            rd_out[i] = rd
            if not (fabs(r) < 1e150 and fabs(rd) < 1e150):
                with gil:
                    return r_out, rd_out, BLOWUP, steps
    return r_out, rd_out, OK, steps
