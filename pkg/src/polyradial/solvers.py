"""Two independent routes to radial stationary points.

Shooting integrates the explicit system from a seed near the origin (or from
a lift-off radius) and root-finds on the miss r(1) - 1.  Minimization works
on the midpoint-per-cell discretisation of the radial energy, whose gradient
and tridiagonal Hessian are exact, and steps along a Newton-preconditioned
descent direction with Armijo backtracking.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded
from scipy.optimize import brentq

from . import _kernels
from .kinematics import EnergyBreakdown, RadialProfile, graded_mesh
from .ode_core import DEFAULT_STENCIL, derivative, strong_residual
from .penalty import PenaltyKind, PenaltySpec, rho, rho_prime, rho_second

__all__ = [
    "SolverError",
    "BracketError",
    "NoDelayedSolution",
    "IntegratorError",
    "LineSearchError",
    "GradientCheckError",
    "Branch",
    "ShootingConfig",
    "MinimizeConfig",
    "ShootResult",
    "RichardsonResult",
    "CrossValidation",
    "integrate_profile",
    "trajectory_ddot",
    "ddot_step",
    "shoot_immediate",
    "shoot_delayed",
    "discrete_energy",
    "discrete_energy_parts",
    "discrete_gradient",
    "finite_difference_gradient",
    "gradient_self_test",
    "initial_profile",
    "differenced_rdot",
    "minimize",
    "minimize_extrapolated",
    "cross_validate",
]

log = logging.getLogger(__name__)

# mesh used by both solvers unless told otherwise
MESH_EPS0 = 1e-6
MESH_RATIO = 1.02


class SolverError(RuntimeError):
    pass


class BracketError(SolverError):
    """The miss function does not change sign on the search interval."""

    def __init__(self, message, lo=None, hi=None, miss_lo=None, miss_hi=None):
        super().__init__(message)
        self.lo, self.hi, self.miss_lo, self.miss_hi = lo, hi, miss_lo, miss_hi


class NoDelayedSolution(BracketError):
    pass


class IntegratorError(SolverError):
    def __init__(self, message, parameter=None, status=None):
        super().__init__(message)
        self.parameter = parameter
        self.status = status


class LineSearchError(SolverError):
    pass


class GradientCheckError(SolverError):
    pass


class Branch(str, enum.Enum):
    IMMEDIATE = "immediate"
    DELAYED = "delayed"


@dataclass(frozen=True)
class ShootingConfig:
    M: int
    branch: Branch = Branch.IMMEDIATE
    # None means the default bracket; only the default immediate bracket auto-expands
    a_bracket: tuple[float, float] | None = None
    delta_bracket: tuple[float, float] | None = None
    eps0: float = 1e-8
    rtol: float = 1e-10
    atol: float = 1e-10
    max_iter: int = 200
    # shooting is cheap, so it defaults to a finer mesh than the minimizer
    n: int = 4096
    mesh_eps0: float = MESH_EPS0
    ratio: float = 1.01
    boundary_tol: float = 1e-9
    scan_points: int = 24
    # the sign scan integrates on every scan_stride-th node; brackets are confirmed on the full mesh
    scan_stride: int = 8
    kick: float = 1e-6
    kick_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch(self.branch))
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        for name in ("a_bracket", "delta_bracket"):
            br = getattr(self, name)
            if br is not None:
                lo, hi = (float(v) for v in br)
                if not (0 < lo < hi):
                    raise ValueError(f"{name} must satisfy 0 < lo < hi")
                if name == "delta_bracket" and hi >= 1:
                    raise ValueError("delta_bracket must lie inside (0, 1)")
                object.__setattr__(self, name, (lo, hi))
        if not 0 < self.eps0 < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        if self.rtol <= 0 or self.atol <= 0 or self.boundary_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.scan_points < 2 or self.scan_stride < 1:
            raise ValueError("iteration counts must be positive")
        if self.kick <= 0:
            raise ValueError("kick must be positive")

    def mesh(self) -> np.ndarray:
        return graded_mesh(self.n, self.mesh_eps0, self.ratio, origin=True)


@dataclass(frozen=True)
class MinimizeConfig:
    M: int
    n: int = 2048
    ratio: float = MESH_RATIO
    eps0: float = MESH_EPS0
    tol: float = 1e-10
    max_iter: int = 200
    armijo: float = 1e-4
    shrink: float = 0.5
    min_step: float = 1e-12
    metric: str = "newton"
    polish: int = 6
    self_test: bool = True
    self_test_tol: float = 1e-6
    seed: int = 0
    stencil: int = DEFAULT_STENCIL

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        if self.n < 16:
            raise ValueError("n must be at least 16")
        if self.tol <= 0 or self.self_test_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.armijo < 1 and 0 < self.shrink < 1):
            raise ValueError("backtracking parameters must lie in (0, 1)")
        if self.metric not in ("newton", "euclidean"):
            raise ValueError("metric must be 'newton' or 'euclidean'")

    def mesh(self) -> np.ndarray:
        return graded_mesh(self.n, self.eps0, self.ratio, origin=True)


@dataclass
class ShootResult:
    profile: RadialProfile
    parameter: float
    miss: float
    route: str
    roots: list = field(default_factory=list)
    monotone: bool = True
    evaluations: int = 0

    @property
    def a(self) -> float:
        return self.parameter

    @property
    def delta(self) -> float:
        return self.parameter


# shooting ---------------------------------------------------------------

def integrate_profile(spec: PenaltySpec, M: int, nodes, r0: float, rd0: float,
                      rtol: float = 1e-10, atol: float = 1e-10):
    """Integrate from (r0, rd0) at nodes[0] across ``nodes``; returns (r, rdot, status, steps)."""
    kind, gamma, t0, width = _kernels.penalty_args(spec)
    return _kernels.integrate_mesh(np.ascontiguousarray(nodes, dtype=float), float(r0), float(rd0),
                                   M, kind, gamma, t0, width, rtol, atol)


def trajectory_ddot(spec: PenaltySpec, M: int, state, h: float, rtol: float = 1e-13) -> float:
    """Central difference (d(R + h) - d(R - h)) / 2h along the solution through ``state``."""
    if not 0 < h < state.R:
        raise ValueError("need 0 < h < R")
    ends = []
    for R1 in (state.R + h, state.R - h):
        r, rd, status, _ = integrate_profile(spec, M, [state.R, R1], state.r, state.rdot, rtol, rtol)
        _check_status(status, R1, "R")
        ends.append(M * r[1] * rd[1] / R1)
    return (ends[0] - ends[1]) / (2.0 * h)


def ddot_step(spec: PenaltySpec, ddot: float, R: float, fraction: float = 1e-3) -> float:
    """Difference step resolving both R and the penalty transition crossed at rate d'."""
    width = 1.0 if spec.is_zero else spec.width
    return fraction * min(R, width / ddot) if ddot > 0 else fraction * R


def _check_status(status, parameter, name):
    if status != _kernels.OK:
        raise IntegratorError(
            f"integration failed ({_kernels.STATUS_TEXT[status]}) at {name} = {parameter!r}",
            parameter, status)


def _immediate_pieces(spec, cfg: ShootingConfig, mesh, a):
    M = cfg.M
    e = cfg.eps0
    tail = mesh[mesh > e]
    nodes = np.concatenate([[e], tail])
    r, rd, status, _ = integrate_profile(spec, M, nodes, a * e**M, M * a * e ** (M - 1), cfg.rtol, cfg.atol)
    return tail, r[1:], rd[1:], status


def _immediate_profile(spec, cfg, mesh, a):
    M = cfg.M
    tail, r_t, rd_t, status = _immediate_pieces(spec, cfg, mesh, a)
    _check_status(status, a, "a")
    head = mesh[mesh <= cfg.eps0]
    # below the seed radius the asymptotic form is used
    r = np.concatenate([a * head**M, r_t])
    rd = np.concatenate([M * a * head ** (M - 1), rd_t])
    return RadialProfile(M, mesh, r, rd)


def _scan(fun, lo, hi, points):
    xs = np.geomspace(lo, hi, points)
    return xs, np.array([fun(x) for x in xs])


def _changes(fs):
    out = [i for i in range(len(fs) - 1) if fs[i] == 0.0 or fs[i] * fs[i + 1] < 0]
    if fs[-1] == 0.0:
        out.append(len(fs) - 1)
    return out


def _thin(mesh, stride):
    """Every stride-th node plus the last one."""
    if stride == 1:
        return mesh
    sub = mesh[::stride]
    return sub if sub[-1] == mesh[-1] else np.append(sub, mesh[-1])


def _find_roots(fun, lo, hi, cfg: ShootingConfig, what: str, expand: bool, scan_fun=None):
    """Bracket every sign change of ``fun`` on a log grid, then refine each with brentq.

    ``scan_fun`` is a cheaper approximation used for the bracket search; each
    bracket is re-evaluated with ``fun`` and the scan is repeated with ``fun``
    if any sign disagrees.
    """
    evals = 0

    def counted(x):
        nonlocal evals
        evals += 1
        return fun(x)

    def scan_counted(x):
        nonlocal evals
        evals += 1
        return scan_fun(x)

    probe = counted if scan_fun is None else scan_counted

    if expand:
        # push the ends outward until the miss changes sign; the miss grows with a
        f_hi = probe(hi)
        while f_hi < 0 and hi < 1e12:
            lo, hi = hi, hi * 8.0
            f_hi = probe(hi)
        f_lo = probe(lo)
        while f_lo > 0 and lo > 1e-12:
            lo, hi = lo / 8.0, lo
            f_lo = probe(lo)
    xs, fs = _scan(probe, lo, hi, cfg.scan_points)
    if scan_fun is not None and _changes(fs):
        confirmed = {}
        for i in _changes(fs):
            for j in (i, min(i + 1, len(xs) - 1)):
                confirmed[j] = counted(xs[j])
        if any(np.sign(confirmed[j]) != np.sign(fs[j]) for j in confirmed):
            xs, fs = _scan(counted, lo, hi, cfg.scan_points)
        else:
            fs = fs.copy()
            for j, v in confirmed.items():
                fs[j] = v
    d = np.diff(fs)
    monotone = bool(np.all(d >= 0) or np.all(d <= 0))
    changes = _changes(fs)
    if not changes:
        xs, fs = [float(x) for x in xs], [float(f) for f in fs]
        raise BracketError(
            f"miss function does not change sign for {what} in [{xs[0]!r}, {xs[-1]!r}] "
            f"(misses {fs[0]!r}, {fs[-1]!r})", xs[0], xs[-1], fs[0], fs[-1])
    roots = []
    for i in changes:
        if fs[i] == 0.0:
            roots.append(float(xs[i]))
            continue
        x = brentq(counted, xs[i], xs[i + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps,
                   maxiter=cfg.max_iter)
        roots.append(float(x))
    if len(roots) > 1:
        warnings.warn(f"{len(roots)} roots for {what} in the bracket: {roots}; returning the smallest",
                      RuntimeWarning, stacklevel=3)
    if not monotone:
        warnings.warn(f"miss function is not monotone in {what} on the scan grid", RuntimeWarning,
                      stacklevel=3)
    return roots, monotone, evals


def shoot_immediate(spec: PenaltySpec, cfg: ShootingConfig, mesh=None) -> ShootResult:
    """Shoot from r = a eps0^M, r' = M a eps0^(M-1) and solve r(1; a) = 1 for a.

    Nodes at or below the seed radius take the asymptotic values a R^M; the
    origin node, if present, gets r = 0 (and r' = a when M = 1).
    """
    mesh = cfg.mesh() if mesh is None else np.asarray(mesh, dtype=float)
    if mesh[-1] != 1.0:
        raise ValueError("mesh must end at R = 1")

    coarse = _thin(mesh, cfg.scan_stride)

    def miss(a, nodes=mesh):
        tail, r, _, status = _immediate_pieces(spec, cfg, nodes, a)
        _check_status(status, a, "a")
        return r[-1] - 1.0

    expand = cfg.a_bracket is None
    lo, hi = cfg.a_bracket or (1e-3, 1.0)
    roots, monotone, evals = _find_roots(miss, lo, hi, cfg, "a", expand,
                                         scan_fun=lambda a: miss(a, coarse))
    a = roots[0]
    profile = _immediate_profile(spec, cfg, mesh, a)
    # the seed is exact only while rho'' vanishes at the seed radius
    seed_exact = bool(rho_second(spec, cfg.M**2 * a * a * cfg.eps0 ** (2 * cfg.M - 2)) == 0.0)
    if not seed_exact:
        warnings.warn(f"seed radius {cfg.eps0!r} is inside the penalty transition for a = {a!r}; "
                      "the power-law seed is not exact there", RuntimeWarning, stacklevel=2)
    profile.meta.update(solver="shoot-immediate", a=a, eps0=cfg.eps0, rtol=cfg.rtol, atol=cfg.atol,
                        backend=_kernels.BACKEND, seed_exact=seed_exact)
    m = profile.boundary_miss()
    if abs(m) > cfg.boundary_tol:
        raise BracketError(f"root found at a = {a!r} but |r(1) - 1| = {abs(m)!r} exceeds tolerance")
    return ShootResult(profile, a, m, "seeded", roots, monotone, evals)


def _kick_pieces(spec, cfg, mesh, delta, eta):
    tail = mesh[mesh > delta]
    nodes = np.concatenate([[delta], tail])
    r, rd, status, _ = integrate_profile(spec, cfg.M, nodes, 0.0, eta, cfg.rtol, cfg.atol)
    return tail, r[1:], rd[1:], status


def _structured_pieces(spec, cfg, mesh, delta):
    # r = a (R/delta)^M reaches d = delay exactly at R = delta
    M = cfg.M
    a = delta * math.sqrt(spec.delay) / M
    tail = mesh[mesh > delta]
    nodes = np.concatenate([[delta], tail])
    r, rd, status, _ = integrate_profile(spec, M, nodes, a, M * a / delta, cfg.rtol, cfg.atol)
    return tail, r[1:], rd[1:], status, a


def _assemble(mesh, delta, head_r, head_rd, r_t, rd_t):
    head = mesh <= delta
    return np.concatenate([head_r(mesh[head]), r_t]), np.concatenate([head_rd(mesh[head]), rd_t])


def shoot_delayed(spec: PenaltySpec, cfg: ShootingConfig, mesh=None) -> ShootResult:
    """Search for a lift-off radius delta.

    For a delayed penalty the solution is a(R/delta)^M up to the radius where
    d reaches the delay, and the shot starts there.  Otherwise the shot starts
    from r(delta) = 0 with a small kick r'(delta) = eta; the root must survive
    a tenfold reduction of eta, or the branch is reported as not found.
    """
    M = cfg.M
    if M < 2:
        raise ValueError("the delayed branch needs M >= 2")
    mesh = cfg.mesh() if mesh is None else np.asarray(mesh, dtype=float)
    lo, hi = cfg.delta_bracket or (1e-4, 0.999)
    coarse = _thin(mesh, cfg.scan_stride)

    if spec.kind is PenaltyKind.DELAYED_SMOOTH_STEP:
        def miss(delta, nodes=mesh):
            _, r, _, status, _ = _structured_pieces(spec, cfg, nodes, delta)
            _check_status(status, delta, "delta")
            return r[-1] - 1.0

        try:
            roots, monotone, evals = _find_roots(miss, lo, hi, cfg, "delta", expand=False,
                                                 scan_fun=lambda x: miss(x, coarse))
        except BracketError as exc:
            raise NoDelayedSolution(f"no delayed solution in bracket: {exc}", exc.lo, exc.hi,
                                    exc.miss_lo, exc.miss_hi) from None
        delta = roots[0]
        _, r_t, rd_t, status, a = _structured_pieces(spec, cfg, mesh, delta)
        r, rd = _assemble(mesh, delta, lambda R: a * (R / delta) ** M,
                          lambda R: M * a * R ** (M - 1) / delta**M, r_t, rd_t)
        profile = RadialProfile(M, mesh, r, rd)
        profile.meta.update(solver="shoot-delayed", route="structured", delta=delta, a=a,
                            backend=_kernels.BACKEND)
        return ShootResult(profile, delta, profile.boundary_miss(), "structured", roots, monotone, evals)

    found = []
    for eta in (cfg.kick, cfg.kick / 10.0):
        def miss(delta, eta=eta, nodes=mesh):
            _, r, _, status = _kick_pieces(spec, cfg, nodes, delta, eta)
            _check_status(status, delta, "delta")
            return r[-1] - 1.0

        try:
            roots, monotone, evals = _find_roots(miss, lo, hi, cfg, "delta", expand=False,
                                                 scan_fun=lambda x, eta=eta: miss(x, eta, coarse))
        except BracketError as exc:
            raise NoDelayedSolution(f"no delayed solution in bracket (kick {eta!r}): {exc}",
                                    exc.lo, exc.hi, exc.miss_lo, exc.miss_hi) from None
        delta = roots[0]
        _, r_t, rd_t, status = _kick_pieces(spec, cfg, mesh, delta, eta)
        r, rd = _assemble(mesh, delta, np.zeros_like, np.zeros_like, r_t, rd_t)
        found.append((delta, r, rd, roots, monotone, evals))
    (d1, r1, *_), (d2, r2, rd2, roots, monotone, evals) = found
    change = max(abs(d1 - d2), float(np.max(np.abs(r1 - r2))))
    if change > cfg.kick_tol:
        raise NoDelayedSolution(
            f"no delayed solution in bracket: the root moves by {change!r} when the kick is "
            f"reduced tenfold (delta {d1!r} -> {d2!r})", lo, hi)
    profile = RadialProfile(M, mesh, r2, rd2)
    profile.meta.update(solver="shoot-delayed", route="kick", delta=d2, kick=cfg.kick / 10.0,
                        backend=_kernels.BACKEND)
    return ShootResult(profile, d2, profile.boundary_miss(), "kick", roots, monotone, evals)


# discrete energy ---------------------------------------------------------

def _cells(M, R, r):
    h = np.diff(R)
    Rc = 0.5 * (R[1:] + R[:-1])
    w = 2.0 * math.pi * h * Rc
    rc = 0.5 * (r[1:] + r[:-1])
    v = np.diff(r) / h
    return h, Rc, w, rc, v, M * rc * v / Rc


def discrete_energy_parts(spec: PenaltySpec, M: int, R, r) -> EnergyBreakdown:
    """Midpoint rule per cell with r' = (r_{i+1} - r_i)/h and r at the cell centre."""
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    h, Rc, w, rc, v, d = _cells(M, R, r)
    dirichlet = float(np.sum(w * 0.5 * (v * v + M * M * rc * rc / (Rc * Rc))))
    penalty = float(np.sum(w * rho(spec, d)))
    return EnergyBreakdown.of(dirichlet, penalty)


def discrete_energy(spec: PenaltySpec, M: int, R, r) -> float:
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    h, Rc, w, rc, v, d = _cells(M, R, r)
    return float(np.sum(w * (0.5 * v * v + 0.5 * M * M * rc * rc / (Rc * Rc) + rho(spec, d))))


def _grad_hess(spec, M, R, r, gauss_newton=False, hessian=True):
    h, Rc, w, rc, v, d = _cells(M, R, r)
    p1 = rho_prime(spec, d)
    a = M * rc / Rc  # dd/dv
    b = M * v / Rc   # dd/drc
    gv = w * (v + p1 * a)
    gr = w * (M * M * rc / (Rc * Rc) + p1 * b)
    g = np.zeros_like(r)
    g[:-1] += -gv / h + 0.5 * gr
    g[1:] += gv / h + 0.5 * gr
    if not hessian:
        return g, None, None
    p2 = rho_second(spec, d)
    Hvv = w * (1.0 + p2 * a * a)
    Hrr = w * (M * M / (Rc * Rc) + p2 * b * b)
    # the rho' cross term makes the cell Hessian indefinite where d is large
    Hvr = w * p2 * a * b if gauss_newton else w * (p2 * a * b + p1 * M / Rc)
    ih = 1.0 / h
    # local Jacobians: v = (r1 - r0)/h, rc = (r0 + r1)/2
    h00 = ih * ih * Hvv - ih * Hvr + 0.25 * Hrr
    h11 = ih * ih * Hvv + ih * Hvr + 0.25 * Hrr
    h01 = -ih * ih * Hvv + 0.25 * Hrr
    diag = np.zeros_like(r)
    diag[:-1] += h00
    diag[1:] += h11
    return g, diag, h01


def discrete_gradient(spec: PenaltySpec, M: int, R, r) -> np.ndarray:
    """Exact gradient of :func:`discrete_energy` with respect to every nodal value."""
    return _grad_hess(spec, M, np.asarray(R, float), np.asarray(r, float), hessian=False)[0]


def finite_difference_gradient(spec: PenaltySpec, M: int, R, r, step: float = 1e-6) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    for i in range(r.size):
        rp = r.copy()
        rm = r.copy()
        rp[i] += step
        rm[i] -= step
        out[i] = (discrete_energy(spec, M, R, rp) - discrete_energy(spec, M, R, rm)) / (2 * step)
    return out


def _sine_modes(R, rng, modes, amplitude):
    k = np.arange(1, modes + 1)
    coef = amplitude * rng.standard_normal(modes) / k
    return R * (np.sin(np.pi * np.outer(R, k)) @ coef)


def gradient_self_test(spec: PenaltySpec, M: int, R, r, free, rng, n_profiles: int = 2,
                       n_dirs: int = 2, step: float = 1e-5) -> float:
    """Worst relative gap between g.v and central differences of the energy along v.

    Probes smoothly perturbed copies of r along smooth random directions that
    vanish on the pinned nodes, so the gradient is not accidentally near zero
    and rounding in the energy stays small.
    """
    R = np.asarray(R, dtype=float)
    worst = 0.0
    for _ in range(n_profiles):
        x = r + np.where(free, _sine_modes(R, rng, 4, 0.05), 0.0)
        g = discrete_gradient(spec, M, R, x)
        for _ in range(n_dirs):
            v = np.where(free, _sine_modes(R, rng, 8, 1.0), 0.0)
            fd = (discrete_energy(spec, M, R, x + step * v) - discrete_energy(spec, M, R, x - step * v)) / (2 * step)
            an = float(g @ v)
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-300))
    return worst


def initial_profile(M: int, mesh, shape: str = "linear") -> RadialProfile:
    """Admissible start with r(0) = 0 and r(1) = 1: the line R or the kernel R^M."""
    mesh = np.asarray(mesh, dtype=float)
    if shape == "linear":
        return RadialProfile(M, mesh, mesh.copy(), np.ones_like(mesh))
    if shape == "power":
        return RadialProfile(M, mesh, mesh**M, M * mesh ** (M - 1))
    raise ValueError(f"unknown initial shape {shape!r}")


def differenced_rdot(R, r, width: int = DEFAULT_STENCIL) -> np.ndarray:
    """r' by Fornberg differences; the origin node uses three points, because a
    wide one-sided stencil across the first cell amplifies rounding badly."""
    rd = derivative(R, r, width)
    if R[0] == 0.0:
        rd[0] = derivative(R[:3], r[:3], 3)[0]
    return rd


def _newton_direction(spec, M, R, r, g, free_idx):
    gi = g[free_idx]
    for gauss_newton in (False, True):
        _, diag, off = _grad_hess(spec, M, R, r, gauss_newton)
        ab = np.zeros((2, free_idx.size))
        ab[1] = diag[free_idx]
        ab[0, 1:] = off[free_idx[:-1]]
        try:
            return -solveh_banded(ab, gi), gauss_newton
        except LinAlgError:
            continue
    raise LineSearchError("neither the Hessian nor its Gauss-Newton part is positive definite")


def minimize(spec: PenaltySpec, cfg: MinimizeConfig, initial: RadialProfile | None = None) -> RadialProfile:
    """Minimize the discrete radial energy with r(1) = 1 (and r(0) = 0 when R = 0 is a node).

    The descent direction is the gradient preconditioned by the exact
    tridiagonal Hessian, or by its Gauss-Newton part where the former is not
    positive definite; ``metric='euclidean'`` uses the plain gradient.  Steps
    are accepted by Armijo backtracking.  Returns the profile with r'
    recovered by differencing.
    """
    if initial is None:
        initial = initial_profile(cfg.M, cfg.mesh())
    if initial.M != cfg.M:
        raise ValueError("initial profile has a different M")
    R = initial.mesh
    r = initial.r.astype(float).copy()
    if abs(r[-1] - 1.0) > 1e-12:
        raise ValueError("initial profile must satisfy r(1) = 1")
    r[-1] = 1.0
    free = np.ones(r.size, dtype=bool)
    free[-1] = False
    if R[0] == 0.0:
        r[0] = 0.0
        free[0] = False
    free_idx = np.flatnonzero(free)
    M = cfg.M

    test_err = None
    if cfg.self_test:
        test_err = gradient_self_test(spec, M, R, r, free, np.random.default_rng(cfg.seed))
        if test_err > cfg.self_test_tol:
            raise GradientCheckError(f"discrete gradient disagrees with finite differences ({test_err!r})")

    E = discrete_energy(spec, M, R, r)
    if not math.isfinite(E):
        raise SolverError("initial energy is not finite")
    status = "max-iter"
    gsup = math.inf
    it = 0
    t_prev = 1.0
    for it in range(cfg.max_iter + 1):
        g = discrete_gradient(spec, M, R, r)
        gsup = float(np.max(np.abs(g[free_idx])))
        if gsup <= cfg.tol:
            status = "converged"
            break
        if it == cfg.max_iter:
            break
        if cfg.metric == "newton":
            step, _ = _newton_direction(spec, M, R, r, g, free_idx)
            t = 1.0
        else:
            step = -g[free_idx]
            t = 2.0 * t_prev
        slope = float(g[free_idx] @ step)
        if cfg.metric == "newton" and -slope <= 1e-15 * max(1.0, abs(E)):
            # the predicted decrease is below the rounding of E
            status = "stalled"
            break
        while True:
            trial = r.copy()
            trial[free_idx] += t * step
            E_new = discrete_energy(spec, M, R, trial)
            if math.isfinite(E_new) and E_new <= E + cfg.armijo * t * slope:
                break
            t *= cfg.shrink
            if t < cfg.min_step:
                break
        if t < cfg.min_step:
            # no decrease is representable any more: rounding floor reached
            if -slope <= 1e-13 * max(1.0, abs(E)):
                status = "stalled"
                break
            raise LineSearchError(f"backtracking failed at iteration {it} (gradient sup {gsup!r})")
        r, E, t_prev = trial, E_new, t
    polished = 0
    if status in ("converged", "stalled") and cfg.metric == "newton":
        # gradient entries near R = 0 carry a factor R, so the sup-norm test
        # passes before those nodes are accurate; finish with full Newton steps
        for polished in range(1, cfg.polish + 1):
            g = discrete_gradient(spec, M, R, r)
            step, _ = _newton_direction(spec, M, R, r, g, free_idx)
            trial = r.copy()
            trial[free_idx] += step
            E_new = discrete_energy(spec, M, R, trial)
            if not (math.isfinite(E_new) and E_new <= E + 1e-14 * max(1.0, abs(E))):
                polished -= 1
                break
            r, E = trial, E_new
            live = r[free_idx] != 0
            if not np.any(live) or np.max(np.abs(step[live] / r[free_idx][live])) <= 1e-14:
                break
        gsup = float(np.max(np.abs(discrete_gradient(spec, M, R, r)[free_idx])))
        if gsup <= cfg.tol:
            status = "converged"
    if status == "max-iter":
        log.warning("minimize stopped after %d iterations with gradient sup %g", it, gsup)
    rdot = differenced_rdot(R, r, cfg.stencil)
    profile = RadialProfile(M, R, r, rdot)
    profile.meta.update(solver="minimize", iterations=it, gradient_sup=gsup, status=status,
                        discrete_energy=E, self_test_error=test_err, metric=cfg.metric,
                        polish_steps=polished)
    return profile


@dataclass
class RichardsonResult:
    profile: RadialProfile
    coarse: RadialProfile
    fine: RadialProfile


def _refine(mesh):
    fine = np.empty(2 * mesh.size - 1)
    fine[::2] = mesh
    fine[1::2] = 0.5 * (mesh[1:] + mesh[:-1])
    return fine


def minimize_extrapolated(spec: PenaltySpec, cfg: MinimizeConfig,
                          initial: RadialProfile | None = None) -> RichardsonResult:
    """Minimize on a mesh and on its midpoint refinement and combine (4 r_h/2 - r_h)/3.

    The discrete minimizer is second-order accurate, so the combination
    removes the leading error term at the coarse nodes.
    """
    if initial is None:
        initial = initial_profile(cfg.M, cfg.mesh())
    coarse = minimize(spec, cfg, initial)
    fine_mesh = _refine(initial.mesh)
    fine_init = RadialProfile(cfg.M, fine_mesh, np.interp(fine_mesh, initial.mesh, initial.r),
                              np.interp(fine_mesh, initial.mesh, initial.rdot))
    fine = minimize(spec, replace(cfg, self_test=False), fine_init)
    r = (4.0 * fine.r[::2] - coarse.r) / 3.0
    rdot = differenced_rdot(coarse.mesh, r, cfg.stencil)
    profile = RadialProfile(cfg.M, coarse.mesh, r, rdot)
    profile.meta.update(solver="minimize-extrapolated",
                        coarse_gradient_sup=coarse.meta["gradient_sup"],
                        fine_gradient_sup=fine.meta["gradient_sup"],
                        coarse_iterations=coarse.meta["iterations"],
                        fine_iterations=fine.meta["iterations"],
                        self_test_error=coarse.meta["self_test_error"])
    return RichardsonResult(profile, coarse, fine)


# cross validation --------------------------------------------------------

@dataclass
class CrossValidation:
    shooting: ShootResult
    minimization: RichardsonResult
    shooting_report: object
    minimization_report: object
    sup_discrepancy: float
    raw_sup_discrepancy: float
    energy_gap: float
    shooting_residual: float
    minimization_residual: float
    raw_minimization_residual: float

    def summary(self) -> dict:
        return {
            "a": self.shooting.parameter,
            "sup_discrepancy": self.sup_discrepancy,
            "raw_sup_discrepancy": self.raw_sup_discrepancy,
            "energy_gap": self.energy_gap,
            "shooting_residual": self.shooting_residual,
            "minimization_residual": self.minimization_residual,
            "raw_minimization_residual": self.raw_minimization_residual,
        }


def _sup(x):
    return float(np.nanmax(x))


def cross_validate(spec: PenaltySpec, M: int, n: int = 2048,
                   shoot_cfg: ShootingConfig | None = None,
                   min_cfg: MinimizeConfig | None = None) -> CrossValidation:
    """Solve by shooting and by (extrapolated) minimization on one mesh and compare.

    ``energy_gap`` is the discrete energy of the shot profile minus that of
    the raw discrete minimizer; it is nonnegative up to rounding.
    """
    from .analysis import full_report

    shoot_cfg = shoot_cfg or ShootingConfig(M, n=n, ratio=MESH_RATIO)
    min_cfg = min_cfg or MinimizeConfig(M, n=n)
    mesh = shoot_cfg.mesh()
    shot = shoot_immediate(spec, shoot_cfg, mesh)
    mini = minimize_extrapolated(spec, min_cfg, initial_profile(M, mesh))
    ps, pm = shot.profile, mini.profile
    width = min_cfg.stencil
    gap = discrete_energy(spec, M, mesh, ps.r) - discrete_energy(spec, M, mesh, mini.coarse.r)
    return CrossValidation(
        shooting=shot,
        minimization=mini,
        shooting_report=full_report(spec, ps, stencil=width),
        minimization_report=full_report(spec, pm, stencil=width),
        sup_discrepancy=float(np.max(np.abs(ps.r - pm.r))),
        raw_sup_discrepancy=float(np.max(np.abs(ps.r - mini.coarse.r))),
        energy_gap=gap,
        shooting_residual=_sup(strong_residual(spec, M, ps, width)),
        minimization_residual=_sup(strong_residual(spec, M, pm, width)),
        raw_minimization_residual=_sup(strong_residual(spec, M, mini.coarse, width)),
    )
