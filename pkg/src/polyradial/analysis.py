"""Post-hoc verification and classification of radial profiles.

Every limit statement about the origin becomes an extrapolation or a test
on the smallest resolved decade of the mesh, with an explicit tolerance.
Checks return a :class:`Verdict`; a report collects one verdict per
registered check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import (EnergyBreakdown, ProfileError, RadialProfile, det_at_origin,
                         extrapolate_to_origin, radial_energy)
from .ode_core import (DEFAULT_STENCIL, derivative, stencil_weights, strong_residual,
                       subsolution_values, window_roots, zdot_values)
from .penalty import PenaltyKind, PenaltySpec, rho_second

__all__ = [
    "AnalysisError",
    "Classification",
    "Verdict",
    "SolutionReport",
    "CHECKS",
    "HARD_CHECKS",
    "classify_liftoff",
    "estimate_DM",
    "pre_threshold_fit",
    "check_signs",
    "check_origin",
    "check_rddot_origin",
    "check_boundary",
    "check_residual",
    "check_monotonic_window",
    "check_subsolution",
    "check_necessary_condition",
    "full_report",
]

CHECKS = ("signs", "window", "subsolution", "origin", "boundary", "residual", "necessary-condition")
# necessary-condition depends on a fitted constant, so it only informs
HARD_CHECKS = frozenset(CHECKS) - {"necessary-condition"}

PASS, FAIL, SKIPPED, FLAGGED = "pass", "fail", "skipped", "flagged"


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class Classification:
    kind: str  # "delayed" or "immediate"
    delta: float | None = None
    a: float | None = None
    exponent: float | None = None

    @property
    def is_delayed(self) -> bool:
        return self.kind == "delayed"


@dataclass
class Verdict:
    name: str
    status: str
    worst_R: float | None = None
    worst_value: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_dict(self) -> dict:
        return {"status": self.status, "worst_R": self.worst_R, "worst_value": self.worst_value}


@dataclass
class SolutionReport:
    classification: Classification
    verdicts: dict
    residual_sup: float
    energy: EnergyBreakdown
    D_M: float | None = None
    D_M_status: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        """No hard check failed."""
        return not any(v.failed for name, v in self.verdicts.items() if name in HARD_CHECKS)

    def failures(self) -> list[str]:
        return [name for name, v in self.verdicts.items() if v.failed]

    def to_dict(self) -> dict:
        """Flat key/value form with dotted keys, in a fixed order."""
        c = self.classification
        out = {
            "classification": c.kind,
            "delta": c.delta,
            "a": c.a,
            "exponent": c.exponent,
            "D_M": self.D_M,
            "D_M_status": self.D_M_status,
        }
        for name in CHECKS:
            if name in self.verdicts:
                for key, value in self.verdicts[name].to_dict().items():
                    out[f"{name}.{key}"] = value
        out["residual_sup"] = self.residual_sup
        for key, value in self.energy.to_dict().items():
            out[f"energy.{key}"] = value
        out["passed"] = self.passed
        for key in sorted(self.meta):
            out[f"meta.{key}"] = self.meta[key]
        return out


# classification -----------------------------------------------------------

def classify_liftoff(profile: RadialProfile, tol: float = 0.0) -> Classification:
    """Delayed if r <= tol on a leading run of nodes reaching at least 10 eps0.

    eps0 is the first positive node.  Otherwise Immediate, with a and the
    exponent from a least-squares fit of log r against log R on the first
    decade of nodes where r > tol.  The default tol = 0 asks for exact zeros,
    since immediate profiles of high degree are legitimately tiny near 0.
    """
    pos = profile.positive
    R = profile.mesh[pos]
    r = profile.r[pos]
    eps0 = R[0]
    small = r <= tol
    lead = int(np.argmin(small)) if not np.all(small) else r.size
    if lead == r.size:
        raise AnalysisError("profile vanishes on the whole mesh")
    if lead > 0 and R[lead - 1] >= 10.0 * eps0:
        return Classification("delayed", delta=float(R[lead - 1]))
    Rl, rl = R[lead:], r[lead:]
    decade = Rl <= 10.0 * Rl[0]
    if np.count_nonzero(decade) < 3 or np.any(rl[decade] <= 0):
        raise AnalysisError("profile is not resolved near the origin")
    p, loga = np.polyfit(np.log(Rl[decade]), np.log(rl[decade]), 1)
    return Classification("immediate", a=float(math.exp(loga)), exponent=float(p))


def _first_decade(profile: RadialProfile):
    pos = profile.positive & (profile.r > 0)
    R = profile.mesh[pos]
    sel = R <= 10.0 * R[0]
    return R[sel], profile.r[pos][sel], profile.rdot[pos][sel]


def estimate_DM(profile: RadialProfile) -> float:
    """Limit of R r'/r at 0: quadratic least-squares fit on the first decade, evaluated at 0."""
    if classify_liftoff(profile).is_delayed:
        raise AnalysisError("D_M is only defined for immediate lift-off")
    R, r, rd = _first_decade(profile)
    if R.size < 3:
        raise AnalysisError("need three nodes in the first decade")
    q = R * rd / r
    # scaled abscissa keeps the Vandermonde system well conditioned
    coef = np.polyfit(R / R[-1], q, min(2, R.size - 1))
    return float(coef[-1])


def pre_threshold_fit(spec: PenaltySpec, profile: RadialProfile) -> dict:
    """Fit r = c R^M on the nodes where d has not yet reached the delay.

    Returns the coefficient, the lift-off radius delta where c delta^M
    reaches d = delay (so that r = a (R/delta)^M with a = delta sqrt(delay)/M),
    and the largest relative deviation from the fit.
    """
    if spec.kind is not PenaltyKind.DELAYED_SMOOTH_STEP:
        raise AnalysisError("the pre-threshold structure needs a delayed penalty")
    M = profile.M
    pos = profile.positive & (profile.r > 0)
    R = profile.mesh[pos]
    r = profile.r[pos]
    d = profile.det()[pos]
    below = d <= spec.delay
    n_pre = int(np.argmin(below)) if not np.all(below) else below.size
    if n_pre < 3:
        raise AnalysisError("too few nodes before the threshold")
    Rs, rs = R[:n_pre], r[:n_pre]
    # least squares in relative terms: minimise sum (1 - c R^M/r)^2
    x = Rs**M / rs
    c = float(np.sum(x) / np.sum(x * x))
    rel = np.abs(rs - c * Rs**M) / rs
    delta = (math.sqrt(spec.delay) / (M * c)) ** (1.0 / (M - 1)) if M > 1 else math.nan
    return {
        "c": c,
        "delta": delta,
        "a": c * delta**M,
        "threshold_node": float(Rs[-1]),
        "nodes": n_pre,
        "relative_residual": float(np.max(rel)),
        "worst_R": float(Rs[int(np.argmax(rel))]),
    }


# checks ------------------------------------------------------------------

# relative precision assumed for sampled data when judging the sign of a
# differenced quantity; near R = 0 differencing amplifies it by 1/h
DATA_PRECISION = 1e-12


def _difference_with_noise(x, y, stencil, precision):
    """Differenced y and a per-node bound on how much data rounding can move it."""
    start, w = stencil_weights(x, stencil, 1)
    Y = y[start[:, None] + np.arange(stencil)[None, :]]
    return np.einsum("ij,ij->i", w, Y), precision * np.einsum("ij,ij->i", np.abs(w), np.abs(Y))


def check_signs(spec: PenaltySpec, profile: RadialProfile, stencil: int = DEFAULT_STENCIL,
                r_tol: float = 1e-12, rdot_tol: float = 1e-10, d_tol: float = 1e-10,
                ddot_tol: float = 1e-8, precision: float = DATA_PRECISION) -> Verdict:
    """r, r', d and the differenced d' are nonnegative up to their tolerances.

    The d' tolerance at each node is widened by the rounding bound of the
    stencil applied to d at relative ``precision``.
    """
    pos = profile.positive
    R = profile.mesh[pos]
    d = profile.det()[pos]
    ddot, noise = _difference_with_noise(R, d, stencil, precision)
    fields = {
        "r": (profile.mesh, profile.r, r_tol),
        "rdot": (profile.mesh, profile.rdot, rdot_tol),
        "d": (R, d, d_tol),
        "ddot": (R, ddot, ddot_tol + noise),
    }
    detail = {}
    worst = (None, None, -math.inf)
    for name, (x, y, tol) in fields.items():
        score = -y / tol
        i = int(np.nanargmax(score))
        detail[f"min_{name}"] = float(np.nanmin(y))
        if score[i] > worst[2]:
            worst = (float(x[i]), float(y[i]), float(score[i]))
    status = FAIL if worst[2] > 1.0 else PASS
    return Verdict("signs", status, worst[0], worst[1], detail)


def check_rddot_origin(profile: RadialProfile, stencil: int = DEFAULT_STENCIL,
                       tol: float = 1e-4, rel_tol: float = 1e-6,
                       precision: float = DATA_PRECISION, min_decay: float = 0.5) -> Verdict:
    """On the first decade the differenced r'' has no negative part beyond
    ``rel_tol`` of its size plus rounding, and |r'' R| at the smallest node
    is below ``tol`` times max(1, sup |r'' R|) or decays at least like
    R**min_decay over the decade."""
    pos = profile.positive
    rdd_all, noise_all = _difference_with_noise(profile.mesh, profile.rdot, stencil, precision)
    R = profile.mesh[pos]
    rdd, noise = rdd_all[pos], noise_all[pos]
    decade = R <= 10.0 * R[0]
    scale = max(1.0, float(np.max(np.abs(rdd[decade]))))
    margin = rdd[decade] + rel_tol * scale + noise[decade]
    i = int(np.argmin(margin))
    liminf = float(rdd[decade][i])
    tail = abs(float(rdd[0] * R[0]))
    sup = float(np.max(np.abs(rdd * R)))
    small = tail <= tol * max(1.0, sup)
    # otherwise the limit must show as power-law decay |r'' R| ~ R^p, p >= min_decay
    rate = _decay_rate(R[decade], np.abs(rdd[decade] * R[decade]))
    ok = margin[i] >= 0 and (small or rate >= min_decay)
    return Verdict("origin", PASS if ok else FAIL, float(R[0]), tail,
                   {"min_rddot": liminf, "rddot_R": tail, "decay_rate": rate})


def _decay_rate(R, values) -> float:
    """Least-squares slope of log(values) against log(R); -inf if any value is 0."""
    if R.size < 3 or np.any(values <= 0):
        return -math.inf
    return float(np.polyfit(np.log(R), np.log(values), 1)[0])


def check_origin(spec: PenaltySpec, profile: RadialProfile, stencil: int = DEFAULT_STENCIL,
                 d_tol: float = 1e-6, rdot_tol: float = 1e-4) -> Verdict:
    """d(0) = 0 and r'(0) = 0 by extrapolation (M >= 2), plus the r'' limits."""
    v = check_rddot_origin(profile, stencil)
    detail = dict(v.detail)
    ok = not v.failed
    if profile.M >= 2:
        pos = profile.positive
        d0 = det_at_origin(profile)
        rd0 = extrapolate_to_origin(profile.mesh[pos], profile.rdot[pos])
        detail.update(d0=d0, rdot0=rd0)
        ok = ok and abs(d0) <= d_tol and abs(rd0) <= rdot_tol
        scores = [(abs(d0) / d_tol, 0.0, d0), (abs(rd0) / rdot_tol, 0.0, rd0),
                  (0.0 if not v.failed else math.inf, v.worst_R, v.worst_value)]
        _, wR, value = max(scores, key=lambda item: item[0])
        return Verdict("origin", PASS if ok else FAIL, wR, value, detail)
    return Verdict("origin", v.status, v.worst_R, v.worst_value, detail)


def check_boundary(profile: RadialProfile, tol: float = 1e-8) -> Verdict:
    miss = profile.boundary_miss()
    return Verdict("boundary", PASS if abs(miss) <= tol else FAIL, float(profile.mesh[-1]), miss)


def check_residual(spec: PenaltySpec, profile: RadialProfile, stencil: int = DEFAULT_STENCIL,
                   tol: float = 1e-6) -> Verdict:
    res = strong_residual(spec, profile.M, profile, stencil)
    i = int(np.nanargmax(res))
    worst = float(res[i])
    return Verdict("residual", PASS if worst <= tol else FAIL, float(profile.mesh[i]), worst)


def _sign_changes(values, threshold):
    signs = np.sign(np.where(np.abs(values) <= threshold, 0.0, values))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def check_monotonic_window(profile: RadialProfile, probe: float = 0.05, rel_tol: float = 1e-9) -> Verdict:
    """z' has one sign on (0, probe] matching one of the three admissible cases,
    and changes sign at most once on (0, 1].

    Uses the closed form of z' valid along solutions.  Values smaller than
    ``rel_tol`` times the size of their terms count as zero.
    """
    M = profile.M
    if M < 2:
        return Verdict("window", SKIPPED, detail={"reason": "needs M >= 2"})
    pos = profile.positive
    R, r, rd = profile.mesh[pos], profile.r[pos], profile.rdot[pos]
    zd, degenerate = zdot_values(M, R, r, rd)
    live = ~degenerate
    if not np.any(live):
        return Verdict("window", PASS, detail={"degenerate": True})
    Rl, rl, rdl, zdl = R[live], r[live], rd[live], zd[live]
    size = M * M * rl * rl / Rl**3 + 2 * M * M * np.abs(rl * rdl) / Rl**2 + rdl * rdl / Rl
    thr = rel_tol * size
    changes = _sign_changes(zdl, thr)
    near = Rl <= probe
    lam_lo, lam_hi = window_roots(M)
    x = Rl * rdl / rl
    zn, xn, thn = zdl[near], x[near], thr[near]
    growth = Rl[near] * rdl[near] - rl[near]  # sign of (r/R)'
    cases = {
        "increasing": bool(np.all(zn >= -thn) and np.all((xn >= lam_lo - 1e-9) & (xn <= lam_hi + 1e-9))),
        "decreasing-expanding": bool(np.all(zn <= thn) and np.all(growth > 0)),
        "decreasing-contracting": bool(np.all(zn <= thn) and np.all(growth < 0)),
    }
    matched = [k for k, v in cases.items() if v]
    # z' > 0 anywhere forces the ratio into the window
    outside = (zdl > thr) & ((x < lam_lo - 1e-9) | (x > lam_hi + 1e-9))
    ok = bool(matched) and changes <= 1 and not np.any(outside)
    detail = {"case": matched[0] if matched else None, "sign_changes": changes,
              "ratio_min": float(np.min(xn)) if xn.size else None,
              "ratio_max": float(np.max(xn)) if xn.size else None,
              "degenerate": bool(np.any(degenerate))}
    if np.any(outside):
        worst_R = float(Rl[np.argmax(outside)])
    elif not matched and near.any():
        worst_R = float(Rl[near][0])
    else:
        worst_R = None
    return Verdict("window", PASS if ok else FAIL, worst_R, float(changes), detail)


def check_subsolution(spec: PenaltySpec, profile: RadialProfile, floor: float = 1e-3,
                      rel_tol: float = 1e-6, stencil: int = DEFAULT_STENCIL) -> Verdict:
    """Discrete z'/R + z'' + c_M rho''(d) z' >= -rel_tol * (size of its terms) on [floor, 1).

    The variant with z'^2 is reported in the detail but not asserted.
    """
    if profile.M < 2:
        return Verdict("subsolution", SKIPPED, detail={"reason": "needs M >= 2"})
    value, variant, scale = subsolution_values(spec, profile.M, profile, stencil)
    R = profile.mesh
    sel = (R >= floor) & (R < R[-1]) & (profile.r != 0)
    if not np.any(sel):
        return Verdict("subsolution", SKIPPED, detail={"reason": "no nodes above the probe floor"})
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(scale > 0, value / scale, 0.0)
    m = np.where(sel, margin, np.inf)
    i = int(np.argmin(m))
    vm = np.where(sel, variant, np.inf)
    j = int(np.argmin(vm))
    detail = {"min_relative": float(m[i]), "min_value": float(value[i]),
              "variant_min": float(vm[j]), "variant_min_R": float(R[j])}
    status = PASS if m[i] >= -rel_tol else FAIL
    return Verdict("subsolution", status, float(R[i]), float(value[i]), detail)


def check_necessary_condition(spec: PenaltySpec, profile: RadialProfile, alpha: float = 0.5,
                              probe: float = 0.05, stencil: int = DEFAULT_STENCIL,
                              tol: float = 1e-6) -> Verdict:
    """M^2 - C rho''(d) R^(2 alpha) <= R r'/r + R^2 r''/r < M^2 on (0, probe].

    C = M^2 c^2 / alpha^2 with c = max |r''| R^(1 - alpha) over the mesh.
    Equality with M^2 is the kernel case and is flagged, not failed.
    """
    M = profile.M
    if M < 2:
        raise AnalysisError("the necessary condition needs M >= 2")
    if classify_liftoff(profile).is_delayed:
        raise AnalysisError("the necessary condition concerns immediate lift-off")
    if not 0 < alpha <= 1:
        raise AnalysisError("alpha must lie in (0, 1]")
    rdd = derivative(profile.mesh, profile.rdot, stencil)
    pos = profile.positive & (profile.r > 0)
    R, r, rd, rdd = profile.mesh[pos], profile.r[pos], profile.rdot[pos], rdd[pos]
    c_alpha = float(np.max(np.abs(rdd) * R ** (1.0 - alpha)))
    C = M * M * c_alpha**2 / alpha**2
    near = R <= probe
    R, r, rd, rdd = R[near], r[near], rd[near], rdd[near]
    middle = R * rd / r + R * R * rdd / r
    lower = M * M - C * rho_second(spec, M * r * rd / R) * R ** (2 * alpha)
    upper = float(M * M)
    scale = tol * upper
    below = lower - middle
    above = middle - upper
    margin = np.maximum(below, above)
    i = int(np.argmax(margin))
    if margin[i] > scale:
        status = FAIL
    elif np.any(np.abs(above) <= scale):
        status = FLAGGED
    else:
        status = PASS
    detail = {"alpha": alpha, "C": C, "c_alpha": c_alpha,
              "equality_nodes": int(np.count_nonzero(np.abs(above) <= scale))}
    return Verdict("necessary-condition", status, float(R[i]), float(middle[i]), detail)


def full_report(spec: PenaltySpec, profile: RadialProfile, alpha: float = 0.5, probe: float = 0.05,
                stencil: int = DEFAULT_STENCIL, residual_tol: float = 1e-6,
                classify_tol: float = 0.0, dm_tol: float = 0.05) -> SolutionReport:
    """Classify, run every applicable check and compute the energy."""
    cls = classify_liftoff(profile, classify_tol)
    verdicts = {
        "signs": check_signs(spec, profile, stencil),
        "window": check_monotonic_window(profile, probe),
        "subsolution": check_subsolution(spec, profile, stencil=stencil),
        "origin": check_origin(spec, profile, stencil),
        "boundary": check_boundary(profile),
        "residual": check_residual(spec, profile, stencil, residual_tol),
    }
    D_M = D_M_status = None
    if not cls.is_delayed:
        try:
            D_M = estimate_DM(profile)
        except AnalysisError:
            D_M = None
        if D_M is not None:
            # a far-off estimate is not a failure: the limit is only proven
            # for W^{2,2} solutions
            D_M_status = "consistent" if abs(D_M - profile.M) <= dm_tol * profile.M else "informative"
        if profile.M >= 2:
            verdicts["necessary-condition"] = check_necessary_condition(spec, profile, alpha, probe, stencil)
    try:
        energy = radial_energy(spec, profile)
    except ProfileError:
        energy = EnergyBreakdown.of(math.nan, math.nan)
    meta = {"M": profile.M, "nodes": int(profile.mesh.size), "stencil": stencil}
    meta.update({k: v for k, v in spec.to_dict().items()})
    for key in ("solver", "a", "delta"):
        if key in profile.meta:
            meta[f"solver_{key}" if key != "solver" else "solver"] = profile.meta[key]
    return SolutionReport(cls, verdicts, verdicts["residual"].worst_value, energy, D_M, D_M_status, meta)
