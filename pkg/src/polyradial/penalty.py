"""Convex penalty on the Jacobian determinant.

The penalty is zero for non-positive arguments, affine with slope ``gamma``
beyond ``s0`` and glued in between by the exponential smooth step, so that
it is C-infinity on the whole line.  Its derivative is ``gamma`` times the
smooth step; the penalty itself is obtained by Gauss-Legendre quadrature of
the step, which is accurate to rounding for 64 nodes.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "PenaltyKind",
    "PenaltySpec",
    "PenaltyError",
    "smooth_step",
    "smooth_step_prime",
    "rho",
    "rho_prime",
    "rho_second",
    "f_of_d",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class PenaltyError(ValueError):
    """Invalid penalty parameters."""


class PenaltyKind(str, enum.Enum):
    SMOOTH_STEP = "smooth-step"
    DELAYED_SMOOTH_STEP = "delayed-smooth-step"
    # rho identically zero: the pure Dirichlet energy (gamma -> 0 limit)
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class PenaltySpec:
    gamma: float = 1.0
    s0: float = 1.0
    kind: PenaltyKind = PenaltyKind.SMOOTH_STEP
    delay: float = 0.0

    def __post_init__(self):
        kind = PenaltyKind(self.kind)
        object.__setattr__(self, "kind", kind)
        for name in ("gamma", "s0", "delay"):
            if not math.isfinite(getattr(self, name)):
                raise PenaltyError(f"{name} must be finite")
        if kind is PenaltyKind.DIRICHLET:
            return
        if self.gamma <= 0:
            raise PenaltyError("gamma must be positive")
        if self.s0 <= 0:
            # no smooth transition exists for s0 == 0
            raise PenaltyError("s0 must be positive")
        if kind is PenaltyKind.DELAYED_SMOOTH_STEP:
            if not 0 < self.delay < self.s0:
                raise PenaltyError("delay must satisfy 0 < delay < s0")
        elif self.delay != 0.0:
            raise PenaltyError("delay is only meaningful for the delayed kind")

    @classmethod
    def smooth_step(cls, gamma: float, s0: float) -> "PenaltySpec":
        return cls(gamma, s0, PenaltyKind.SMOOTH_STEP)

    @classmethod
    def delayed(cls, gamma: float, s0: float, delay: float) -> "PenaltySpec":
        return cls(gamma, s0, PenaltyKind.DELAYED_SMOOTH_STEP, delay)

    @classmethod
    def dirichlet(cls) -> "PenaltySpec":
        return cls(0.0, 0.0, PenaltyKind.DIRICHLET)

    @classmethod
    def from_options(cls, gamma: float, s0: float, delay: float | None = None) -> "PenaltySpec":
        if gamma == 0:
            return cls.dirichlet()
        if delay:
            return cls.delayed(gamma, s0, delay)
        return cls.smooth_step(gamma, s0)

    @property
    def is_zero(self) -> bool:
        return self.kind is PenaltyKind.DIRICHLET

    @property
    def t0(self) -> float:
        """Left end of the transition region (where rho starts to lift off)."""
        return self.delay if self.kind is PenaltyKind.DELAYED_SMOOTH_STEP else 0.0

    @property
    def width(self) -> float:
        return self.s0 - self.t0

    @property
    def kappa(self) -> float:
        """Intercept of the affine tail, ``rho(s) = gamma*s + kappa`` for s >= s0."""
        if self.is_zero:
            return 0.0
        # gamma * int_{t0}^{s} step = gamma*(s - t0) - gamma*width/2 on the tail
        return -self.gamma * (self.s0 + self.t0) / 2.0

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "gamma": self.gamma, "s0": self.s0, "delay": self.delay}


def smooth_step(t):
    """exp(-1/t) / (exp(-1/t) + exp(-1/(1-t))), exactly 0 for t <= 0 and 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    with np.errstate(divide="ignore", over="ignore"):
        # 1/t overflows to inf for subnormal t; expit saturates correctly
        out[inside] = expit(1.0 / (1.0 - ti) - 1.0 / ti)
    return out


def smooth_step_prime(t):
    """Derivative of the step; zero where |1/t - 1/(1-t)| > 700, below 1e-300 anyway."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = (t > 1.0 / 702.0) & (t < 1.0 - 1.0 / 702.0)
    ti = t[inside]
    g = 1.0 / ti - 1.0 / (1.0 - ti)
    e = np.exp(-np.abs(g))
    val = e / (1.0 + e) ** 2 * (1.0 / ti**2 + 1.0 / (1.0 - ti) ** 2)
    out[inside] = np.where(np.abs(g) > 700.0, 0.0, val)
    return out


def _step_integral(t):
    # int_0^t smooth_step, t in (0, 1); reflected so the quadrature span is <= 1/2
    u = np.minimum(t, 1.0 - t)
    half = 0.5 * u[:, None]
    vals = smooth_step(half * (_GL_NODES[None, :] + 1.0))
    base = half[:, 0] * (vals @ _GL_WEIGHTS)
    return np.where(t <= 0.5, base, t - 0.5 + base)


def _scaled(spec: PenaltySpec, s):
    return (np.asarray(s, dtype=float) - spec.t0) / spec.width


def _finish(value, s):
    return float(value[0]) if np.ndim(s) == 0 else value


def rho(spec: PenaltySpec, s):
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros_like(s_arr)
    if not spec.is_zero:
        tail = s_arr >= spec.s0
        out[tail] = spec.gamma * s_arr[tail] + spec.kappa
        mid = (s_arr > spec.t0) & ~tail
        if np.any(mid):
            out[mid] = spec.gamma * spec.width * _step_integral(_scaled(spec, s_arr[mid]))
    return _finish(out, s)


def rho_prime(spec: PenaltySpec, s):
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if spec.is_zero:
        return _finish(np.zeros_like(s_arr), s)
    return _finish(spec.gamma * smooth_step(_scaled(spec, s_arr)), s)


def rho_second(spec: PenaltySpec, s):
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if spec.is_zero:
        return _finish(np.zeros_like(s_arr), s)
    return _finish(spec.gamma / spec.width * smooth_step_prime(_scaled(spec, s_arr)), s)


def f_of_d(spec: PenaltySpec, d):
    """f(d) = d*rho'(d) - rho(d); equals -kappa on the affine tail."""
    d_arr = np.atleast_1d(np.asarray(d, dtype=float))
    # adding 0.0 turns the -0.0 of negative d into +0.0
    return _finish(d_arr * rho_prime(spec, d_arr) - rho(spec, d_arr) + 0.0, d)
