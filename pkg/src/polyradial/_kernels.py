"""Select the compiled integrator when available, else the pure-Python one."""
import os

from . import _integrate_py

_FORCE_PURE = os.environ.get("POLYRADIAL_PURE_PYTHON", "").strip() not in ("", "0")

if _FORCE_PURE:
    _impl = _integrate_py
    BACKEND = "python"
else:
    try:
        from . import _integrate as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _integrate_py
        BACKEND = "python"

integrate_mesh = _impl.integrate_mesh
rhs = _impl.rhs
rho_second_scalar = _impl.rho_second_scalar
OK = _integrate_py.OK
BLOWUP = _integrate_py.BLOWUP
STEP_UNDERFLOW = _integrate_py.STEP_UNDERFLOW
MAX_STEPS = _integrate_py.MAX_STEPS

STATUS_TEXT = {
    OK: "ok",
    BLOWUP: "blow-up",
    STEP_UNDERFLOW: "step size underflow",
    MAX_STEPS: "step budget exhausted",
}


def penalty_args(spec):
    """Flatten a PenaltySpec into the scalar arguments the kernels take."""
    if spec.is_zero:
        return 0, 0.0, 0.0, 1.0
    return 1, float(spec.gamma), float(spec.t0), float(spec.width)
