import numpy as np
import pytest

from contactmech.flows import FlowError, IntegratorConfig
from contactmech.geometry import ContactChart, ContactSystem
from contactmech.integrability import (
    IntegrabilityError,
    NewtonDivergenceError,
    RayProjectionError,
    RayTarget,
    SectionError,
    SectionSpec,
    angle_solve,
    coisotropy_check,
    darboux_verify,
    dissipative_map_check,
    involution_check,
    period_detect,
    rank_check,
    ray_project,
    tangency_check,
    verify_section,
)

X4 = np.array([2.0, 3.0, 5.0, 1.0])


def _ray(*v):
    return RayTarget(np.array(v, dtype=float))


# ---------------------------------------------------------------------------
# Targets and sections
# ---------------------------------------------------------------------------

def test_ray_target_rejects_zero():
    with pytest.raises(ValueError):
        RayTarget(np.zeros(3))


def test_section_spec_validation():
    dom = {"L1": (0.5, 2.0), "L2": (0.5, 2.0)}
    with pytest.raises(ValueError):
        SectionSpec("s", ("L1", "L1"), ("0", "1", "1", "L1"), dom)
    with pytest.raises(ValueError):
        SectionSpec("s", ("L1", "L2"), ("0", "w", "1", "L2"), dom)
    with pytest.raises(ValueError):
        SectionSpec("s", ("L1", "L2"), ("0", "1", "1", "L2"), {"L1": (0, 1)})
    with pytest.raises(ValueError):
        SectionSpec("s", ("L1", "L2"), ("0", "1", "1", "L2"), dom, denominator_index=2)


def test_section_chi_and_jacobian(pz_config):
    section = pz_config.section("graph-z")
    lam = np.array([3.0, 5.0])
    assert np.allclose(section.chi_at(lam), [0.0, 0.6, 1.0, 5.0])
    J = section.chi_jacobian_at(lam)
    want = np.array([[0.0, 0.0], [0.2, -3.0 / 25.0], [0.0, 0.0], [0.0, 1.0]])
    assert np.allclose(J, want, atol=1e-12)


def test_verify_bundled_sections(pz_config, pz_symp):
    for name in ("graph-z", "graph-p"):
        report = verify_section(pz_symp, pz_config.section(name), seed=0)
        assert report.passed
        assert report.sign == -1
        assert report.max_target_residual < 1e-12
        assert report.max_horizontality < 1e-12


def test_verify_section_detects_plus_sign(pz_symp):
    # r = -L2 with L2 < 0 flips the pairing to F(chi(Lambda)) = +Lambda
    section = SectionSpec(
        "plus",
        ("L1", "L2"),
        ("0", "L1 / L2", "1", "-L2"),
        {"L1": (0.5, 2.0), "L2": (-2.0, -0.5)},
        denominator_index=1,
    )
    report = verify_section(pz_symp, section, seed=0)
    assert report.passed
    assert report.sign == 1


def test_verify_section_flags_nonhorizontal(pz_symp):
    # moving q with Lambda breaks theta-horizontality but not the target
    section = SectionSpec(
        "skew",
        ("L1", "L2"),
        ("L1", "L1 / L2", "1", "L2"),
        {"L1": (0.5, 2.0), "L2": (0.5, 2.0)},
    )
    report = verify_section(pz_symp, section, seed=0)
    assert report.sign == -1
    assert report.max_horizontality > 1e-3
    assert not report.passed


def test_verify_section_rejects_escaping_fiber(pz_symp):
    section = SectionSpec(
        "bad-fiber",
        ("L1", "L2"),
        ("0", "L1 / L2", "1", "-L2"),
        {"L1": (0.5, 2.0), "L2": (0.5, 2.0)},
    )
    with pytest.raises(SectionError):
        verify_section(pz_symp, section, seed=0)


def test_verify_section_rejects_wrong_arity(pz_symp):
    section = SectionSpec("short", ("L1", "L2"), ("0", "1", "L2"),
                          {"L1": (0.5, 2.0), "L2": (0.5, 2.0)})
    with pytest.raises(SectionError):
        verify_section(pz_symp, section, seed=0)


# ---------------------------------------------------------------------------
# Involution and rank
# ---------------------------------------------------------------------------

def test_involution_passes_on_commuting_integrals(pz_system, involutive5):
    assert involution_check(pz_system, n_samples=30).passed
    report = involution_check(involutive5, n_samples=30)
    assert report.passed
    assert report.max_abs_bracket == 0.0


def test_involution_fails_on_conjugate_pair(noninvolutive5):
    report = involution_check(noninvolutive5, n_samples=30)
    assert not report.passed
    assert report.max_abs_bracket >= 1.0  # {q1, p1} = -1 everywhere
    assert report.worst_pair in ((0, 1), (0, 2))


def test_rank_check_full_rank(pz_system, involutive5):
    assert rank_check(pz_system, n_samples=20).min_rank == 2
    assert rank_check(involutive5, n_samples=20).passed


def test_rank_check_detects_degeneracy():
    chart = ContactChart.standard(1)
    flat = ContactSystem(chart, ["1", "2"], {"q": (0, 1), "p": (0.5, 1), "z": (0.5, 1)})
    report = rank_check(flat, n_samples=5)
    assert report.min_rank == 0
    assert not report.passed


# ---------------------------------------------------------------------------
# Ray projection
# ---------------------------------------------------------------------------

def test_ray_project_lands_on_ray(involutive5):
    x, r = ray_project(involutive5, _ray(1.0, 1.0, 1.0), np.ones(5))
    assert r > 0
    F = involutive5.integral_values(x)
    assert np.max(np.abs(F - r * np.ones(3))) < 1e-9


def test_ray_project_nontrivial_direction(pz_system):
    x, r = ray_project(pz_system, _ray(3.0, 5.0), np.array([0.0, 1.0, 1.0]))
    F = pz_system.integral_values(x)
    assert np.max(np.abs(F - r * np.array([3.0, 5.0]))) < 1e-9


def test_ray_project_unreachable_ray(rotation_system):
    # f_0 = (q^2 + p^2)/2 is nonnegative, so no point maps onto -r
    with pytest.raises(RayProjectionError):
        ray_project(rotation_system, _ray(-1.0, 1.0), np.array([1.0, 0.5, 1.0]))


# ---------------------------------------------------------------------------
# Coisotropy and tangency on ray preimages
# ---------------------------------------------------------------------------

def test_coisotropy_and_tangency_pass_together(involutive5):
    target = _ray(1.0, 1.0, 1.0)
    co = coisotropy_check(involutive5, target, n_points=8, seed=0)
    ta = tangency_check(involutive5, target, n_points=8, seed=0)
    assert co.passed and ta.passed
    assert co.max_abs_sum < 1e-10
    assert ta.max_abs_contraction < 1e-10


def test_coisotropy_and_tangency_fail_together(noninvolutive5):
    target = _ray(1.0, 1.0, 1.0)
    co = coisotropy_check(noninvolutive5, target, n_points=8, seed=0)
    ta = tangency_check(noninvolutive5, target, n_points=8, seed=0)
    assert not co.passed and not ta.passed


def test_two_integral_coisotropy_is_vacuous():
    # with only two integrals every cyclic sum has a repeated index and
    # cancels identically, so only the tangency check can see the broken
    # pair; three or more integrals are needed for the two to agree
    chart = ContactChart.standard(1)
    broken = ContactSystem(
        chart, ["q", "z"], {"q": (0.5, 2.0), "p": (0.5, 2.0), "z": (0.5, 2.0)},
        positive=["p", "z"],
    )
    target = _ray(1.0, 1.0)
    co = coisotropy_check(broken, target, n_points=6, seed=0)
    ta = tangency_check(broken, target, n_points=6, seed=0)
    assert co.passed and co.max_abs_sum == 0.0
    assert not ta.passed


def test_coisotropy_rejects_off_ray_points(pz_system, rng):
    points = pz_system.sample(rng, 5)  # generic samples are off the ray
    with pytest.raises(IntegrabilityError):
        coisotropy_check(pz_system, _ray(3.0, 1.0), points=points)


def test_dissipative_map_check(involutive5, noninvolutive5):
    target = _ray(1.0, 1.0, 1.0)
    good = dissipative_map_check(involutive5, target, n_points=6, seed=0)
    assert good.passed
    assert good.min_rank >= good.required_rank
    bad = dissipative_map_check(noninvolutive5, target, n_points=6, seed=0)
    assert not bad.passed


# ---------------------------------------------------------------------------
# Angle solve
# ---------------------------------------------------------------------------

def test_angle_solve_reference_values(pz_config, pz_symp):
    sol = angle_solve(pz_symp, pz_config.section("graph-z"), X4)
    assert sol.converged
    assert sol.sign == -1
    assert sol.denominator_index == 1
    assert np.allclose(sol.y, [2.0, -np.log(5.0)], atol=1e-8)
    assert np.allclose(sol.A, [3.0, 5.0], atol=1e-12)
    assert np.allclose(sol.A_tilde, [-0.6], atol=1e-12)


def test_angle_solve_alternate_section(pz_config, pz_symp):
    sol = angle_solve(pz_symp, pz_config.section("graph-p"), X4)
    assert sol.denominator_index == 0
    assert np.allclose(sol.y, [1.0 / 3.0, -np.log(3.0)], atol=1e-8)
    assert np.allclose(sol.A_tilde, [-5.0 / 3.0], atol=1e-12)


def test_angles_do_not_depend_on_fiber(pz_config, pz_symp):
    section = pz_config.section("graph-z")
    sol_a = angle_solve(pz_symp, section, np.array([2.0, 3.0, 5.0, 0.6]))
    sol_b = angle_solve(pz_symp, section, np.array([2.0, 3.0, 5.0, 1.7]))
    assert np.allclose(sol_a.y, sol_b.y, atol=1e-7)


def test_angle_solve_denominator_fallback(pz_symp):
    section = SectionSpec(
        "no-index",
        ("L1", "L2"),
        ("0", "L1 / L2", "1", "L2"),
        {"L1": (0.5, 2.0), "L2": (0.5, 2.0)},
    )
    sol = angle_solve(pz_symp, section, X4)
    assert sol.denominator_index == 1  # argmax |A| with A = (3, 5)


def test_angle_solve_with_basis_change(pz_config, pz_symp):
    M = np.array([[1.0, 1.0], [0.0, 1.0]])
    sol = angle_solve(pz_symp, pz_config.section("graph-z"), X4, basis=M)
    assert np.allclose(sol.A, [8.0, 5.0], atol=1e-12)
    # generator flows compose: y_f = M^T y_g
    assert np.allclose(M.T @ sol.y, [2.0, -np.log(5.0)], atol=1e-7)


def test_angle_solve_rejects_bad_basis(pz_config, pz_symp):
    with pytest.raises(ValueError):
        angle_solve(pz_symp, pz_config.section("graph-z"), X4, basis=np.eye(3))
    with pytest.raises(ValueError):
        angle_solve(
            pz_symp, pz_config.section("graph-z"), X4,
            basis=np.array([[1.0, 0.0], [0.0, 0.0]]),
        )


def test_angle_solve_warm_start_converges_immediately(pz_config, pz_symp):
    section = pz_config.section("graph-z")
    cold = angle_solve(pz_symp, section, X4)
    warm = angle_solve(
        pz_symp, section, X4, sign=cold.sign, y0=cold.y, jacobian=cold.jacobian
    )
    assert warm.iterations == 0
    assert np.allclose(warm.y, cold.y, atol=1e-12)


def test_angle_solve_iteration_budget(pz_config, pz_symp):
    with pytest.raises(NewtonDivergenceError):
        angle_solve(pz_symp, pz_config.section("graph-z"), X4, max_iter=1)


def test_angle_solve_off_section_ray(pz_symp):
    # a section pinned to one ray cannot cover a query off that ray
    section = SectionSpec(
        "pinned",
        ("L1", "L2"),
        ("0", "0.6", "1", "5"),
        {"L1": (0.5, 2.0), "L2": (0.5, 2.0)},
    )
    with pytest.raises(SectionError):
        angle_solve(pz_symp, section, np.array([1.0, 1.0, 1.0, 1.0]))


# ---------------------------------------------------------------------------
# Coframe recovery from the angles
# ---------------------------------------------------------------------------

def test_darboux_verify_both_sections(pz_config, pz_system):
    for name in ("graph-z", "graph-p"):
        report = darboux_verify(pz_system, pz_config.section(name), n_points=4, seed=2)
        assert report.passed, report
        assert report.max_residual < 1e-5


def test_darboux_verify_fiber_reference_invariance(pz_config, pz_system):
    pts = np.array([[1.0, 1.2, 0.9]])
    a = darboux_verify(pz_system, pz_config.section("graph-z"), points=pts, r_ref=1.0)
    b = darboux_verify(pz_system, pz_config.section("graph-z"), points=pts, r_ref=1.5)
    assert a.passed and b.passed
    assert abs(a.max_residual - b.max_residual) < 1e-5


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

def test_period_detect_rotation(rotation_system):
    T = period_detect(rotation_system, 0, np.array([1.0, 0.0, 1.0]), 10.0)
    assert T is not None
    assert abs(T - 2.0 * np.pi) < 1e-6


def test_period_detect_none_for_translation(pz_system):
    assert period_detect(pz_system, "p", np.array([0.0, 1.0, 1.0]), 10.0) is None


def test_period_detect_respects_horizon(rotation_system):
    assert period_detect(rotation_system, 0, np.array([1.0, 0.0, 1.0]), 5.0) is None


def test_period_detect_raises_on_truncated_scan(rotation_system):
    # z dips negative along this orbit and trips the positivity guard
    with pytest.raises(FlowError):
        period_detect(rotation_system, 0, np.array([1.0, 0.0, 0.2]), 10.0)
