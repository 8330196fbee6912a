import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyradial.analysis import (CHECKS, HARD_CHECKS, AnalysisError, _decay_rate, check_boundary,
                                 check_monotonic_window, check_necessary_condition, check_origin,
                                 check_rddot_origin, check_residual, check_signs, check_subsolution,
                                 classify_liftoff, estimate_DM, full_report, pre_threshold_fit)
from polyradial.kinematics import RadialProfile, graded_mesh
from polyradial.penalty import PenaltySpec

ZERO = PenaltySpec.dirichlet()
GENERIC = PenaltySpec.smooth_step(5.0, 0.5)
MESH = graded_mesh(1024, 1e-6, 1.02, origin=True)


def power(M, c=1.0, mesh=MESH):
    return RadialProfile(M, mesh, c * mesh**M, c * M * mesh ** (M - 1))


def delayed_profile(M, delta, mesh=MESH):
    # r = ((R - delta)/(1 - delta))^3 past delta, zero before
    x = np.clip((mesh - delta) / (1 - delta), 0.0, None)
    return RadialProfile(M, mesh, x**3, 3 * x**2 / (1 - delta))


# classification -----------------------------------------------------------

@pytest.mark.parametrize("M", [1, 2, 3, 4])
@pytest.mark.parametrize("c", [0.5, 1.0, 21.8])
def test_power_laws_are_immediate(M, c):
    cls = classify_liftoff(power(M, c))
    assert not cls.is_delayed
    assert cls.a == pytest.approx(c, rel=1e-9)
    assert cls.exponent == pytest.approx(M, rel=1e-9)


@pytest.mark.parametrize("delta", [1e-3, 0.1, 0.4])
def test_zero_run_is_delayed(delta):
    p = delayed_profile(2, delta)
    cls = classify_liftoff(p)
    assert cls.is_delayed
    assert cls.delta == float(p.mesh[p.mesh <= delta][-1])


def test_short_zero_run_is_not_delayed():
    # zeros only below 10 eps0 are a resolution artefact, not lift-off
    p = delayed_profile(2, 5e-6)
    assert not classify_liftoff(p).is_delayed


def test_tolerance_turns_tiny_values_into_zeros():
    p = power(4)
    assert not classify_liftoff(p).is_delayed
    assert classify_liftoff(p, tol=1e-12).is_delayed


def test_vanishing_profile_is_rejected():
    mesh = MESH
    with pytest.raises(AnalysisError):
        classify_liftoff(RadialProfile(2, mesh, np.zeros_like(mesh), np.zeros_like(mesh)))


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 4.0), st.floats(0.1, 30.0), st.floats(-2.0, 2.0))
def test_DM_recovers_exponent(p, c, b):
    R = MESH
    r = c * R**p * (1 + b * R)
    rd = c * (p * R ** (p - 1) * (1 + b * R) + b * R**p)
    prof = RadialProfile(2, R, r, np.nan_to_num(rd))
    assert estimate_DM(prof) == pytest.approx(p, abs=1e-6)


def test_DM_rejects_delayed():
    with pytest.raises(AnalysisError):
        estimate_DM(delayed_profile(2, 0.1))


def test_pre_threshold_fit_on_structured_profile():
    spec = PenaltySpec.delayed(2.0, 1.0, 0.4)
    c = 3.0
    p = power(2, c)
    fit = pre_threshold_fit(spec, p)
    assert fit["c"] == pytest.approx(c, rel=1e-12)
    assert fit["relative_residual"] < 1e-12
    # d = 4 c^2 R^2 reaches the delay at R = sqrt(delay)/(2c)
    assert fit["delta"] == pytest.approx(math.sqrt(0.4) / (2 * c), rel=1e-12)
    assert fit["a"] == pytest.approx(fit["delta"] * math.sqrt(0.4) / 2, rel=1e-12)
    with pytest.raises(AnalysisError):
        pre_threshold_fit(GENERIC, p)


# individual checks --------------------------------------------------------

@pytest.mark.parametrize("M", [1, 2, 3])
def test_kernel_profiles_pass_everything(M):
    report = full_report(ZERO, power(M))
    assert report.passed, report.failures()
    assert report.residual_sup < 1e-8
    assert report.D_M == pytest.approx(M, abs=1e-6)
    assert report.D_M_status == "consistent"


def test_signs_fail_on_decreasing_profile():
    R = MESH
    p = RadialProfile(1, R, R + R**2, 1 + 2 * R)
    p2 = RadialProfile(1, R, R * (1 - 0.5 * np.sin(6 * R)), 1 - 0.5 * np.sin(6 * R) - 3 * R * np.cos(6 * R))
    assert not check_signs(ZERO, p).failed
    v = check_signs(ZERO, p2)
    assert v.failed and v.detail["min_rdot"] < 0


def test_boundary_check():
    assert not check_boundary(power(2)).failed
    v = check_boundary(power(2, 0.9))
    assert v.failed and v.worst_value == pytest.approx(-0.1)


def test_residual_check_detects_wrong_power():
    assert not check_residual(ZERO, power(2)).failed
    wrong = RadialProfile(2, MESH, MESH**3, 3 * MESH**2)
    assert check_residual(ZERO, wrong).failed


def test_origin_check_needs_vanishing_determinant():
    # r = R has d = 2 r r'/R = 2 at the origin when M = 2
    bad = RadialProfile(2, MESH, MESH.copy(), np.ones_like(MESH))
    v = check_origin(ZERO, bad)
    assert v.failed and v.detail["d0"] == pytest.approx(2.0)
    assert not check_origin(ZERO, power(2)).failed


@pytest.mark.parametrize("p,min_decay,ok", [(1.8, 0.5, True), (1.8, 0.9, False), (1.1, 0.5, False)])
def test_rddot_origin_decay_alternative(p, min_decay, ok):
    # r = R + R^p has |r'' R| ~ R^(p-1), too large at eps0 = 1e-2 for the size test
    R = graded_mesh(400, 1e-2, 1.02)
    prof = RadialProfile(1, R, R + R**p, 1 + p * R ** (p - 1))
    v = check_rddot_origin(prof, min_decay=min_decay)
    assert v.detail["decay_rate"] == pytest.approx(p - 1, abs=0.02)
    assert v.worst_value > 1e-4
    assert v.failed is not ok


def test_decay_rate_helper():
    R = np.geomspace(1e-6, 1e-5, 20)
    assert _decay_rate(R, 3 * R**0.7) == pytest.approx(0.7)
    assert _decay_rate(R, np.where(R > 2e-6, R, 0.0)) == -math.inf
    assert _decay_rate(R[:2], R[:2]) == -math.inf


def test_window_and_subsolution_skip_for_M1():
    p = power(1)
    assert check_monotonic_window(p).status == "skipped"
    assert check_subsolution(ZERO, p).status == "skipped"


def test_window_on_solution(generic_shot):
    v = check_monotonic_window(generic_shot.profile)
    assert v.status == "pass"
    assert v.detail["sign_changes"] <= 1


def test_window_rejects_oscillating_ratio():
    # ratio R r'/r leaves the window and z' changes sign repeatedly
    R = MESH
    r = R**2 * (1 + 0.5 * np.sin(40 * R))
    rd = 2 * R * (1 + 0.5 * np.sin(40 * R)) + 20 * R**2 * np.cos(40 * R)
    assert check_monotonic_window(RadialProfile(2, R, r, rd), probe=1.0).failed


def test_subsolution_on_solution(generic_shot):
    v = check_subsolution(GENERIC, generic_shot.profile)
    assert v.status == "pass"
    assert "variant_min" in v.detail


def test_necessary_condition_errors():
    with pytest.raises(AnalysisError):
        check_necessary_condition(ZERO, power(1))
    with pytest.raises(AnalysisError):
        check_necessary_condition(ZERO, delayed_profile(2, 0.1))
    with pytest.raises(AnalysisError):
        check_necessary_condition(ZERO, power(2), alpha=0.0)


def test_necessary_condition_flags_kernel_equality():
    v = check_necessary_condition(ZERO, power(2))
    assert v.status == "flagged" and v.detail["equality_nodes"] > 0


def test_necessary_condition_on_solution(generic_shot):
    assert check_necessary_condition(GENERIC, generic_shot.profile).status in ("pass", "flagged")


# reports ------------------------------------------------------------------

def test_report_covers_every_check(generic_spec, generic_shot):
    report = full_report(generic_spec, generic_shot.profile)
    assert set(report.verdicts) == set(CHECKS)
    assert report.passed
    assert "necessary-condition" not in HARD_CHECKS


def test_report_key_order_is_fixed(generic_spec, generic_shot):
    keys = list(full_report(generic_spec, generic_shot.profile).to_dict())
    head = ["classification", "delta", "a", "exponent", "D_M", "D_M_status"]
    assert keys[:6] == head
    check_keys = [k for k in keys if "." in k and k.split(".")[0] in CHECKS]
    assert [k.split(".")[0] for k in check_keys] == sorted(
        (k.split(".")[0] for k in check_keys), key=CHECKS.index)
    assert keys.index("residual_sup") < keys.index("energy.total") < keys.index("passed")
    meta = [k for k in keys if k.startswith("meta.")]
    assert meta == sorted(meta)


def test_report_of_delayed_profile_has_no_DM():
    report = full_report(ZERO, delayed_profile(2, 0.1))
    assert report.classification.is_delayed
    assert report.D_M is None and "necessary-condition" not in report.verdicts


def test_soft_failure_does_not_fail_report(monkeypatch, generic_spec, generic_shot):
    from polyradial import analysis
    from polyradial.analysis import Verdict
    monkeypatch.setattr(analysis, "check_necessary_condition",
                        lambda *a, **k: Verdict("necessary-condition", "fail"))
    report = full_report(generic_spec, generic_shot.profile)
    assert report.passed and report.failures() == ["necessary-condition"]
