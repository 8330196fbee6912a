"""Pure-Python Dormand-Prince 5(4) integrator for the radial Euler-Lagrange system.

Mirrors ``_integrate.pyx`` line for line; used when the compiled core is not
built or ``POLYRADIAL_PURE_PYTHON`` is set.
"""
import math

import numpy as np

# status codes shared with the compiled core
OK = 0
BLOWUP = 1
STEP_UNDERFLOW = 2
MAX_STEPS = 3

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# fifth- minus fourth-order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


def rho_second_scalar(d, kind, gamma, t0, width):
    if kind == 0:
        return 0.0
    t = (d - t0) / width
    if t <= 0.0 or t >= 1.0:
        return 0.0
    g = 1.0 / t - 1.0 / (1.0 - t)
    if g > 700.0 or g < -700.0:
        return 0.0
    e = math.exp(-abs(g))
    # sigmoid(g)*sigmoid(-g) = e/(1+e)^2 with e = exp(-|g|)
    return gamma / width * e / (1.0 + e) ** 2 * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))


def rhs(R, r, rd, M, kind, gamma, t0, width):
    """(r'', d') from the closed-form determinant derivative."""
    d = M * r * rd / R
    rho2 = rho_second_scalar(d, kind, gamma, t0, width)
    u = R * rd - r
    ddot = M * (u * u + (M * M - 1.0) * r * r) / (R * R * R + M * M * rho2 * r * r * R)
    return (M * M * r / R - rd - M * rho2 * ddot * r) / R


def integrate_mesh(mesh, r0, rd0, M, kind, gamma, t0, width, rtol, atol, max_steps=1_000_000):
    """Integrate (r, r')' = (r', r'') across ``mesh`` starting from (r0, rd0) at mesh[0].

    The error weight of both components is tied to the local solution scale
    max(|r|, R|r'|), since the system is homogeneous near the origin and an
    absolute floor would swamp solutions of size R**M.

    Returns (r, rdot, status, steps).
    """
    mesh = np.asarray(mesh, dtype=float)
    n = mesh.shape[0]
    r_out = np.full(n, np.nan)
    rd_out = np.full(n, np.nan)
    r_out[0] = r0
    rd_out[0] = rd0
    R = float(mesh[0])
    r = float(r0)
    rd = float(rd0)
    Mf = float(M)
    f = (rd, rhs(R, r, rd, Mf, kind, gamma, t0, width))
    h_prop = 0.0
    steps = 0
    for i in range(1, n):
        target = float(mesh[i])
        direction = 1.0 if target > R else -1.0
        h_prop = (target - R) if h_prop == 0.0 else direction * abs(h_prop)
        while True:
            h = h_prop
            last = False
            if direction * (R + h - target) >= 0.0:
                h = target - R
                last = True
            k1r, k1d = f
            y2r = r + h * _A21 * k1r
            y2d = rd + h * _A21 * k1d
            R2 = R + _C2 * h
            k2r, k2d = y2d, rhs(R2, y2r, y2d, Mf, kind, gamma, t0, width)
            y3r = r + h * (_A31 * k1r + _A32 * k2r)
            y3d = rd + h * (_A31 * k1d + _A32 * k2d)
            k3r, k3d = y3d, rhs(R + _C3 * h, y3r, y3d, Mf, kind, gamma, t0, width)
            y4r = r + h * (_A41 * k1r + _A42 * k2r + _A43 * k3r)
            y4d = rd + h * (_A41 * k1d + _A42 * k2d + _A43 * k3d)
            k4r, k4d = y4d, rhs(R + _C4 * h, y4r, y4d, Mf, kind, gamma, t0, width)
            y5r = r + h * (_A51 * k1r + _A52 * k2r + _A53 * k3r + _A54 * k4r)
            y5d = rd + h * (_A51 * k1d + _A52 * k2d + _A53 * k3d + _A54 * k4d)
            k5r, k5d = y5d, rhs(R + _C5 * h, y5r, y5d, Mf, kind, gamma, t0, width)
            y6r = r + h * (_A61 * k1r + _A62 * k2r + _A63 * k3r + _A64 * k4r + _A65 * k5r)
            y6d = rd + h * (_A61 * k1d + _A62 * k2d + _A63 * k3d + _A64 * k4d + _A65 * k5d)
            Rn = target if last else R + h
            k6r, k6d = y6d, rhs(Rn, y6r, y6d, Mf, kind, gamma, t0, width)
            nr = r + h * (_B1 * k1r + _B3 * k3r + _B4 * k4r + _B5 * k5r + _B6 * k6r)
            nd = rd + h * (_B1 * k1d + _B3 * k3d + _B4 * k4d + _B5 * k5d + _B6 * k6d)
            steps += 1
            if not (math.isfinite(nr) and math.isfinite(nd)):
                return r_out, rd_out, BLOWUP, steps
            k7r, k7d = nd, rhs(Rn, nr, nd, Mf, kind, gamma, t0, width)
            er = h * (_E1 * k1r + _E3 * k3r + _E4 * k4r + _E5 * k5r + _E6 * k6r + _E7 * k7r)
            ed = h * (_E1 * k1d + _E3 * k3d + _E4 * k4d + _E5 * k5d + _E6 * k6d + _E7 * k7d)
            scale = max(abs(r), abs(nr), abs(R * rd), abs(Rn * nd))
            sc_r = atol * scale + rtol * max(abs(r), abs(nr))
            sc_d = atol * scale / abs(Rn) + rtol * max(abs(rd), abs(nd))
            if sc_r == 0.0 and sc_d == 0.0:
                # trivial solution: nothing to control
                err = 0.0
            else:
                er = er / sc_r if sc_r > 0.0 else (0.0 if er == 0.0 else math.inf)
                ed = ed / sc_d if sc_d > 0.0 else (0.0 if ed == 0.0 else math.inf)
                err = math.sqrt(0.5 * (er * er + ed * ed))
            if not math.isfinite(err):
                err = 1e10
            if err <= 1.0:
                R = Rn
                r = nr
                rd = nd
                f = (k7r, k7d)
                fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if last:
                    # a clipped final step says nothing against the proposal
                    h_prop = direction * max(abs(h_prop), abs(h) * fac)
                    break
                h_prop = h * fac
            else:
                h_prop = h * max(0.2, 0.9 * err ** -0.2)
                if abs(h_prop) < 1e-15 * max(abs(R), 1e-300):
                    return r_out, rd_out, STEP_UNDERFLOW, steps
            if steps >= max_steps:
                return r_out, rd_out, MAX_STEPS, steps
        r_out[i] = r
        rd_out[i] = rd
        if not (abs(r) < 1e150 and abs(rd) < 1e150):
            return r_out, rd_out, BLOWUP, steps
    return r_out, rd_out, OK, steps
