import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from polyradial import _integrate_py, _kernels
from polyradial.kinematics import graded_mesh
from polyradial.penalty import PenaltySpec, rho_second

GENERIC = PenaltySpec.smooth_step(5.0, 0.5)

BACKENDS = [pytest.param(_integrate_py, id="python")]
try:
    from polyradial import _integrate
    BACKENDS.append(pytest.param(_integrate, id="cython"))
except ImportError:
    _integrate = None


def run(backend, spec, mesh, r0, rd0, M, rtol=1e-10, atol=1e-10, max_steps=1_000_000):
    return backend.integrate_mesh(np.ascontiguousarray(mesh), r0, rd0, M, *_kernels.penalty_args(spec),
                                  rtol, atol, max_steps)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rho_second_scalar_matches_vector(backend):
    for spec in (GENERIC, PenaltySpec.delayed(2.0, 1.0, 0.3)):
        args = _kernels.penalty_args(spec)
        s = np.linspace(-0.2, 1.3, 301)
        ours = np.array([backend.rho_second_scalar(x, *args) for x in s])
        assert np.allclose(ours, rho_second(spec, s), rtol=1e-12, atol=1e-14)


# local tolerance 1e-10 accumulates to about 1e-9 over the mesh
@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("M", [1, 2, 3, 4])
def test_kernel_solution_is_reproduced(backend, M):
    mesh = graded_mesh(200, 1e-4, 1.05)
    r, rd, status, steps = run(backend, PenaltySpec.dirichlet(), mesh, mesh[0] ** M, M * mesh[0] ** (M - 1), M)
    assert status == _kernels.OK and steps > 0
    assert np.allclose(r, mesh**M, rtol=1e-8, atol=0)
    assert np.allclose(rd, M * mesh ** (M - 1), rtol=1e-8, atol=1e-300)


@pytest.mark.parametrize("backend", BACKENDS)
def test_against_scipy(backend):
    M = 2
    mesh = np.linspace(0.05, 1.0, 40)
    y0 = (0.01, 0.4)
    r, rd, status, _ = run(backend, GENERIC, mesh, *y0, M, 1e-12, 1e-12)
    args = _kernels.penalty_args(GENERIC)
    ref = solve_ivp(lambda R, y: [y[1], _integrate_py.rhs(R, y[0], y[1], float(M), *args)],
                    (mesh[0], mesh[-1]), y0, method="DOP853", t_eval=mesh, rtol=1e-13, atol=1e-15)
    assert status == _kernels.OK
    assert np.allclose(r, ref.y[0], rtol=1e-9)
    assert np.allclose(rd, ref.y[1], rtol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_integrates_backwards(backend):
    mesh = np.linspace(1.0, 0.1, 30)
    r, rd, status, _ = run(backend, PenaltySpec.dirichlet(), mesh, 1.0, 3.0, 3)
    assert status == _kernels.OK
    assert np.allclose(r, mesh**3, rtol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_limit_status(backend):
    mesh = graded_mesh(50, 1e-6, 1.05)
    *_, status, steps = run(backend, GENERIC, mesh, 1e-12, 1e-6, 2, max_steps=3)
    assert status == _kernels.MAX_STEPS and steps == 3


@pytest.mark.parametrize("backend", BACKENDS)
def test_blowup_status(backend):
    # r'' = 4 r/R^2 - r'/R with a huge start grows past the overflow guard
    mesh = np.array([1e-3, 1e3, 1e80])
    r, rd, status, _ = run(backend, PenaltySpec.dirichlet(), mesh, 1e140, 1e143, 2)
    assert status == _kernels.BLOWUP
    assert np.isnan(r[-1])


@pytest.mark.skipif(_integrate is None, reason="compiled core not built")
@pytest.mark.parametrize("spec", [GENERIC, PenaltySpec.delayed(2.0, 1.0, 0.3), PenaltySpec.dirichlet()], ids=str)
def test_backends_agree(spec):
    mesh = graded_mesh(1024, 1e-6, 1.02)
    a = run(_integrate_py, spec, mesh, 3e-12 * 21.8, 2 * 21.8 * 1e-6, 2)
    b = run(_integrate, spec, mesh, 3e-12 * 21.8, 2 * 21.8 * 1e-6, 2)
    assert a[2] == b[2] and a[3] == b[3]
    assert np.allclose(a[0], b[0], rtol=1e-13, atol=0)
    assert np.allclose(a[1], b[1], rtol=1e-13, atol=0)


def _backend_in_subprocess(env_extra):
    env = dict(os.environ, **env_extra)
    out = subprocess.run([sys.executable, "-c", "import polyradial; print(polyradial.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    return out.stdout.strip()


def test_pure_python_switch():
    assert _backend_in_subprocess({"POLYRADIAL_PURE_PYTHON": "1"}) == "python"


@pytest.mark.skipif(_integrate is None, reason="compiled core not built")
def test_compiled_selected_by_default():
    env = {k: v for k, v in os.environ.items() if k != "POLYRADIAL_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", "import polyradial; print(polyradial.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "cython"


def test_penalty_args():
    assert _kernels.penalty_args(PenaltySpec.dirichlet())[0] == 0
    kind, gamma, t0, width = _kernels.penalty_args(PenaltySpec.delayed(2.0, 1.0, 0.3))
    assert (kind, gamma, t0, width) == (1, 2.0, 0.3, pytest.approx(0.7))
