import json
import math
import pathlib
import warnings

import numpy as np
import pytest

from polyradial import solvers
from polyradial.analysis import classify_liftoff, full_report
from polyradial.kinematics import RadialProfile, graded_mesh
from polyradial.ode_core import OdeState, ddot_closed_form, strong_residual
from polyradial.penalty import PenaltySpec
from polyradial.solvers import (BracketError, GradientCheckError, MinimizeConfig, NoDelayedSolution,
                                ShootingConfig, cross_validate, ddot_step, differenced_rdot,
                                discrete_energy, discrete_energy_parts, discrete_gradient,
                                finite_difference_gradient, gradient_self_test, initial_profile,
                                minimize, minimize_extrapolated, shoot_delayed, shoot_immediate,
                                trajectory_ddot)

GENERIC = PenaltySpec.smooth_step(5.0, 0.5)
UNIT = PenaltySpec.smooth_step(1.0, 1.0)
BASELINE = json.loads((pathlib.Path(__file__).parent / "data" / "cross_baseline.json").read_text())


# configuration ---------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(M=0), dict(M=1.5), dict(M=2, a_bracket=(1.0, 0.5)), dict(M=2, a_bracket=(0.0, 1.0)),
    dict(M=2, delta_bracket=(0.1, 1.0)), dict(M=2, eps0=0.0), dict(M=2, rtol=0.0),
    dict(M=2, scan_points=1), dict(M=2, scan_stride=0), dict(M=2, kick=0.0), dict(M=2, branch="sideways"),
])
def test_shooting_config_validation(kwargs):
    with pytest.raises(ValueError):
        ShootingConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(M=0), dict(M=2, n=8), dict(M=2, tol=0.0), dict(M=2, armijo=1.0), dict(M=2, shrink=0.0),
    dict(M=2, metric="lbfgs"),
])
def test_minimize_config_validation(kwargs):
    with pytest.raises(ValueError):
        MinimizeConfig(**kwargs)


def test_meshes_start_at_origin():
    assert ShootingConfig(2).mesh()[0] == 0.0
    assert MinimizeConfig(2).mesh()[0] == 0.0
    assert ShootingConfig(2).mesh().size == 4098


# shooting --------------------------------------------------------------------

@pytest.mark.parametrize("M", [1, 2, 3, 4])
def test_kernel_shot(M):
    res = shoot_immediate(PenaltySpec.dirichlet(), ShootingConfig(M))
    assert res.a == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(res.profile.r - res.profile.mesh**M)) <= 1e-8
    assert res.route == "seeded" and res.monotone


def test_generic_shot_regression(generic_shot):
    assert generic_shot.a == pytest.approx(21.802878012, rel=1e-9)
    assert abs(generic_shot.miss) <= 1e-9
    assert generic_shot.profile.meta["seed_exact"]
    assert len(generic_shot.roots) == 1


def test_default_bracket_expands():
    # a* is far above the default bracket (1e-3, 1)
    assert shoot_immediate(GENERIC, ShootingConfig(2, n=1024, ratio=1.05)).a > 1.0


def test_explicit_bracket_without_root():
    with pytest.raises(BracketError) as info:
        shoot_immediate(GENERIC, ShootingConfig(2, n=512, ratio=1.05, a_bracket=(1e-3, 1.0)))
    assert info.value.lo == pytest.approx(1e-3) and info.value.miss_hi < 0


def test_inexact_seed_is_flagged():
    with pytest.warns(RuntimeWarning, match="seed"):
        res = shoot_immediate(PenaltySpec.smooth_step(50.0, 0.5), ShootingConfig(2))
    assert res.profile.meta["seed_exact"] is False


def test_no_root_for_extreme_penalty():
    with pytest.raises(BracketError):
        shoot_immediate(PenaltySpec.smooth_step(50.0, 0.5), ShootingConfig(3))


@pytest.mark.parametrize("spec", [PenaltySpec.dirichlet(), GENERIC], ids=str)
def test_thinned_scan_finds_the_same_root(spec):
    full = shoot_immediate(spec, ShootingConfig(2, scan_stride=1))
    thin = shoot_immediate(spec, ShootingConfig(2, scan_stride=8))
    assert thin.a == full.a
    assert np.array_equal(thin.profile.r, full.profile.r)


def test_scan_sign_disagreement_triggers_full_scan():
    # the cheap scan puts the root in the wrong place; the confirmation must catch it
    cfg = ShootingConfig(2, scan_points=8)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        roots, _, _ = solvers._find_roots(lambda x: x - 0.3, 0.01, 1.0, cfg, "a", False,
                                          scan_fun=lambda x: x - 0.05)
    assert roots == [pytest.approx(0.3)]


def test_multiple_roots_are_reported():
    cfg = ShootingConfig(2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        roots, monotone, _ = solvers._find_roots(lambda x: (x - 0.1) * (x - 0.5), 0.01, 1.0, cfg, "a", False)
    messages = " ".join(str(w.message) for w in caught)
    assert "2 roots" in messages and "not monotone" in messages
    assert roots == [pytest.approx(0.1), pytest.approx(0.5)]
    assert not monotone


@pytest.mark.parametrize("spec", [PenaltySpec.dirichlet(), GENERIC], ids=str)
def test_no_delayed_solution_for_smooth_penalties(spec):
    with pytest.raises(NoDelayedSolution, match="no delayed solution in bracket"):
        shoot_delayed(spec, ShootingConfig(2, branch="delayed"))


def test_delayed_branch_needs_M_two():
    with pytest.raises(ValueError):
        shoot_delayed(GENERIC, ShootingConfig(1, branch="delayed"))


def test_structured_delayed_matches_seeded(delayed_shots):
    for spec, res in delayed_shots:
        seeded = shoot_immediate(spec, ShootingConfig(res.profile.M))
        assert res.route == "structured"
        assert np.max(np.abs(res.profile.r - seeded.profile.r)) <= 1e-12
        assert res.profile.meta["a"] == pytest.approx(res.delta * math.sqrt(spec.delay) / res.profile.M)
        assert not classify_liftoff(res.profile).is_delayed


def test_trajectory_ddot():
    state = OdeState(0.5, 0.3, 0.7)
    c = ddot_closed_form(GENERIC, 2, state)
    h = ddot_step(GENERIC, c, state.R)
    e1 = abs(trajectory_ddot(GENERIC, 2, state, h) - c)
    e2 = abs(trajectory_ddot(GENERIC, 2, state, h / 2) - c)
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)
    with pytest.raises(ValueError):
        trajectory_ddot(GENERIC, 2, state, 0.6)


def test_ddot_step_scales():
    assert ddot_step(PenaltySpec.dirichlet(), 5.0, 0.5) == pytest.approx(2e-4)
    assert ddot_step(GENERIC, 1e4, 0.5) == pytest.approx(1e-3 * 0.5 / 1e4)
    assert ddot_step(GENERIC, 0.0, 0.5) == pytest.approx(5e-4)


# discrete energy -------------------------------------------------------------

def test_discrete_energy_of_identity():
    R = graded_mesh(64, 1e-3, 1.1, origin=True)
    assert discrete_energy(UNIT, 1, R, R) == pytest.approx(1.5 * math.pi, rel=1e-12)
    parts = discrete_energy_parts(UNIT, 1, R, R)
    assert parts.total == pytest.approx(parts.dirichlet + parts.penalty)


def test_discrete_gradient_matches_differences():
    R = graded_mesh(48, 1e-3, 1.1, origin=True)
    r = R + 0.1 * np.sin(np.pi * R) ** 2
    g = discrete_gradient(GENERIC, 2, R, r)
    fd = finite_difference_gradient(GENERIC, 2, R, r)
    assert np.max(np.abs(g - fd)) <= 1e-6 * np.max(np.abs(g))


def test_gradient_self_test_value():
    R = graded_mesh(128, 1e-4, 1.05, origin=True)
    free = np.ones(R.size, bool)
    free[[0, -1]] = False
    err = gradient_self_test(GENERIC, 2, R, R.copy(), free, np.random.default_rng(0))
    assert err < 1e-7


def test_broken_gradient_is_caught(monkeypatch):
    real = solvers.discrete_gradient
    monkeypatch.setattr(solvers, "discrete_gradient", lambda *a: 1.01 * real(*a))
    with pytest.raises(GradientCheckError):
        minimize(GENERIC, MinimizeConfig(2, n=64))


# minimization ----------------------------------------------------------------

def test_identity_is_the_minimizer_for_M1():
    cfg = MinimizeConfig(1, n=256)
    mesh = cfg.mesh()
    start = RadialProfile(1, mesh, mesh**2, 2 * mesh)
    p = minimize(UNIT, cfg, start)
    assert p.meta["status"] == "converged"
    assert np.max(np.abs(p.r - mesh)) < 1e-10
    assert np.max(np.abs(p.rdot - 1)) < 1e-8


def test_minimizer_independent_of_start():
    cfg = MinimizeConfig(2, n=512)
    mesh = cfg.mesh()
    a = minimize(GENERIC, cfg, initial_profile(2, mesh, "linear"))
    b = minimize(GENERIC, cfg, initial_profile(2, mesh, "power"))
    assert np.max(np.abs(a.r - b.r)) < 1e-8
    assert a.meta["discrete_energy"] <= discrete_energy(GENERIC, 2, mesh, mesh) + 1e-12


def test_euclidean_metric_descends():
    cfg = MinimizeConfig(2, n=64, metric="euclidean", max_iter=30)
    mesh = cfg.mesh()
    p = minimize(GENERIC, cfg)
    assert p.meta["status"] in ("converged", "stalled", "max-iter")
    assert p.meta["discrete_energy"] < discrete_energy(GENERIC, 2, mesh, mesh)


def test_unknown_initial_shape():
    with pytest.raises(ValueError):
        initial_profile(2, np.linspace(0, 1, 5), "zigzag")


def test_differenced_rdot_exact_on_quadratics():
    R = graded_mesh(100, 1e-6, 1.1, origin=True)
    assert np.allclose(differenced_rdot(R, 3 * R**2 + R), 6 * R + 1, rtol=1e-9, atol=1e-9)


def test_richardson_improves_residual():
    cfg = MinimizeConfig(2, n=2048)
    rich = minimize_extrapolated(GENERIC, cfg)
    raw = np.nanmax(strong_residual(GENERIC, 2, rich.coarse))
    ext = np.nanmax(strong_residual(GENERIC, 2, rich.profile))
    assert ext < raw / 100
    assert rich.fine.mesh.size == 2 * rich.coarse.mesh.size - 1
    assert rich.coarse.meta["status"] == rich.fine.meta["status"] == "converged"


def test_rounding_floor_is_not_max_iter():
    # the fine mesh used to spin at gradient sup 2.5e-10 until max_iter
    rich = minimize_extrapolated(GENERIC, MinimizeConfig(2, n=1024))
    assert rich.fine.meta["status"] == "converged"
    assert rich.fine.meta["iterations"] < 100


# cross validation ------------------------------------------------------------

def test_cross_validation_against_baseline(cross):
    s = cross.summary()
    assert s["a"] == pytest.approx(BASELINE["a"], rel=1e-10)
    assert s["sup_discrepancy"] <= 1e-8
    # the shot profile cannot beat the discrete minimizer on its own energy
    assert s["energy_gap"] >= -1e-10
    assert cross.shooting_report.passed and cross.minimization_report.passed
    assert cross.shooting_report.energy.total == pytest.approx(BASELINE["energy_shooting"], rel=1e-10)


def test_full_report_on_minimizer_matches_shot(cross):
    a = full_report(GENERIC, cross.shooting.profile).energy.total
    b = full_report(GENERIC, cross.minimization.profile).energy.total
    assert a == pytest.approx(b, rel=1e-9)


def test_cross_validate_m3_small():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cv = cross_validate(PenaltySpec.smooth_step(2.0, 1.0), 3, n=1024)
    assert cv.sup_discrepancy < 1e-6
