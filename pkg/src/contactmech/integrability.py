"""Integrability diagnostics and numerical action-angle coordinates.

Given n+1 candidate integrals F = (f_0..f_n) on a (2n+1)-dimensional
contact chart, this module checks the structure theory numerically:

* involution_check / rank_check: {f_a, f_b} = 0 and rank TF >= n on
  sampled points.
* ray_project: Gauss-Newton projection onto the ray preimage
  M_ray = {F(x) = r * Lambda, r > 0}.
* coisotropy_check: the cyclic sums
  f_a {f_b, f_c} + f_c {f_a, f_b} + f_b {f_c, f_a} on ray points.
* tangency_check: contraction of the Hamiltonian fields with the
  two-forms f_a df_b - f_b df_a on ray points.
* verify_section / angle_solve / darboux_verify: horizontal sections of
  the lifted moment map on the symplectization, the Newton solve for the
  angle coordinates y^a in x = Phi(y; chi(F(x))), and the
  finite-difference verification that dy^d - sum_j Atilde_j dy^j
  reproduces the rescaled contact form -eta / A_d.
* period_detect: smallest positive return time of a flow, if any.

Angle conventions: a declared section may satisfy F(chi(Lambda)) equal
to +Lambda or -Lambda; the sign is detected and the base point uses the
reparameterized true section chi(sign * Lambda).  Actions A_a are the
basis-weighted integral values at the query point; the relabeling
denominator is the section's declared index, else argmax |A_a|.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .expressions import (
    Binary,
    Const,
    EvaluationDomainError,
    Expr,
    evaluate,
    free_variables,
    gradient_evaluator,
    parse,
)
from .flows import FlowError, IntegratorConfig, flow_map, group_action, integrate
from .geometry import ContactSystem
from .symplectization import SympSystem, symplectize

__all__ = [
    "IntegrabilityError",
    "RayProjectionError",
    "NewtonDivergenceError",
    "SectionError",
    "RayTarget",
    "SectionSpec",
    "ActionAngleResult",
    "InvolutionReport",
    "RankReport",
    "CoisotropyReport",
    "TangencyReport",
    "DissipativeMapReport",
    "SectionReport",
    "DarbouxReport",
    "involution_check",
    "rank_check",
    "ray_project",
    "coisotropy_check",
    "tangency_check",
    "dissipative_map_check",
    "verify_section",
    "period_detect",
    "angle_solve",
    "darboux_verify",
]


class IntegrabilityError(RuntimeError):
    """Base class for diagnostic failures."""


class RayProjectionError(IntegrabilityError):
    """Gauss-Newton could not land on the ray preimage with r > 0."""


class NewtonDivergenceError(IntegrabilityError):
    """The angle solve did not converge."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SectionError(IntegrabilityError):
    """A section fails to cover a required ray or leaves the chart."""


# ---------------------------------------------------------------------------
# Targets and sections
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RayTarget:
    """A ray direction Lambda in integral space (up to positive scale)."""

    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "direction", np.asarray(self.direction, dtype=float).copy()
        )
        if self.direction.ndim != 1 or not np.any(self.direction):
            raise ValueError("ray direction must be a nonzero vector")


class SectionSpec:
    """Parametric section chi of the lifted moment map.

    Args:
        name: identifier used in configs and reports.
        params: names of the ray parameters (one per integral).
        components: 2n+2 expressions for the chart components of chi,
            functions of the parameters only.
        domain: per-parameter (low, high) sampling bounds.
        denominator_index: index of the action designated nonvanishing on
            this section; None falls back to argmax |A_a| per query.
    """

    def __init__(
        self,
        name: str,
        params: Sequence[str],
        components: Sequence[Expr | str],
        domain: Mapping[str, Sequence[float]] | np.ndarray,
        denominator_index: int | None = None,
    ):
        self.name = str(name)
        self.params = tuple(params)
        if len(set(self.params)) != len(self.params):
            raise ValueError("section parameter names must be unique")
        comps = []
        for c in components:
            c = parse(c, self.params) if isinstance(c, str) else c
            extra = free_variables(c) - set(self.params)
            if extra:
                raise ValueError(f"section component uses unknown names {sorted(extra)}")
            comps.append(c)
        self.components = tuple(comps)
        if isinstance(domain, Mapping):
            missing = set(self.params) - set(domain)
            if missing:
                raise ValueError(f"section domain missing bounds for {sorted(missing)}")
            bounds = np.array([domain[p] for p in self.params], dtype=float)
        else:
            bounds = np.asarray(domain, dtype=float)
        if bounds.shape != (len(self.params), 2):
            raise ValueError("section domain must give (low, high) per parameter")
        self.domain = bounds
        if denominator_index is not None and not 0 <= denominator_index < len(self.params):
            raise ValueError(f"denominator index {denominator_index} out of range")
        self.denominator_index = denominator_index
        self._grads = tuple(gradient_evaluator(c, self.params) for c in comps)

    def chi_at(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        env = dict(zip(self.params, map(float, lam)))
        return np.array([evaluate(c, env) for c in self.components])

    def chi_jacobian_at(self, lam) -> np.ndarray:
        """Columns are d chi / d Lambda_a; shape (components, params)."""
        lam = np.asarray(lam, dtype=float)
        out = np.empty((len(self.components), len(self.params)))
        for A, run in enumerate(self._grads):
            out[A] = run(lam)[1]
        return out


@dataclass(frozen=True)
class ActionAngleResult:
    """Solved angle coordinates and action data at one query point.

    y and A are indexed like the system integrals.  A_tilde lists
    -A_j / A_d for j != d in index order, d the denominator index.
    jacobian is the last Newton Jacobian (reusable for warm starts).
    """

    y: np.ndarray
    A: np.ndarray
    A_tilde: np.ndarray
    denominator_index: int
    M_matrix: np.ndarray
    N_matrix: np.ndarray
    sign: int
    residual: float
    iterations: int
    converged: bool
    jacobian: np.ndarray


# ---------------------------------------------------------------------------
# Sampled checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvolutionReport:
    max_abs_bracket: float
    worst_pair: tuple[int, int]
    worst_point: np.ndarray
    tolerance: float
    n_samples: int
    seed: int | None
    passed: bool


@dataclass(frozen=True)
class RankReport:
    min_rank: int
    required_rank: int
    worst_point: np.ndarray
    tolerance: float
    n_samples: int
    seed: int | None
    passed: bool


@dataclass(frozen=True)
class CoisotropyReport:
    max_abs_sum: float
    worst_triple: tuple[int, int, int]
    worst_point: np.ndarray
    max_membership_residual: float
    tolerance: float
    n_points: int
    passed: bool


@dataclass(frozen=True)
class TangencyReport:
    max_abs_contraction: float
    worst_triple: tuple[int, int, int]
    worst_point: np.ndarray
    tolerance: float
    n_points: int
    passed: bool


@dataclass(frozen=True)
class DissipativeMapReport:
    coisotropy: CoisotropyReport
    min_rank: int
    required_rank: int
    passed: bool


def involution_check(
    system: ContactSystem,
    n_samples: int = 100,
    tolerance: float = 1e-8,
    seed: int | None = 0,
    points: np.ndarray | None = None,
) -> InvolutionReport:
    """Max |{f_a, f_b}| over sampled points and integral pairs."""
    if points is None:
        points = system.sample(np.random.default_rng(seed), n_samples)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst, pair, where = 0.0, (0, 0), points[0]
    m = len(system.integrals)
    for x in points:
        for a in range(m):
            for b in range(a + 1, m):
                val = abs(
                    system.chart.jacobi_bracket_at(
                        system.integrals[a], system.integrals[b], x
                    )
                )
                if val > worst:
                    worst, pair, where = val, (a, b), x
    return InvolutionReport(
        max_abs_bracket=worst,
        worst_pair=pair,
        worst_point=np.asarray(where),
        tolerance=tolerance,
        n_samples=len(points),
        seed=seed,
        passed=bool(worst <= tolerance),
    )


def rank_check(
    system: ContactSystem,
    n_samples: int = 100,
    tolerance: float = 1e-8,
    seed: int | None = 0,
    points: np.ndarray | None = None,
) -> RankReport:
    """Min over samples of rank TF (SVD threshold relative to sigma_max)."""
    if points is None:
        points = system.sample(np.random.default_rng(seed), n_samples)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    required = system.chart.n
    min_rank, where = len(system.integrals), points[0]
    for x in points:
        sigma = np.linalg.svd(system.integral_jacobian(x), compute_uv=False)
        top = sigma[0] if len(sigma) else 0.0
        rank = int(np.sum(sigma > tolerance * max(top, 1.0)))
        if rank < min_rank:
            min_rank, where = rank, x
    return RankReport(
        min_rank=min_rank,
        required_rank=required,
        worst_point=np.asarray(where),
        tolerance=tolerance,
        n_samples=len(points),
        seed=seed,
        passed=bool(min_rank >= required),
    )


# ---------------------------------------------------------------------------
# Ray preimages
# ---------------------------------------------------------------------------

def _membership(system: ContactSystem, target: RayTarget, x) -> tuple[float, float]:
    """Least-squares ray residual and the fitted scale r*."""
    lam = target.direction
    F = system.integral_values(x)
    r_star = float(F @ lam / (lam @ lam))
    resid = float(np.max(np.abs(F - r_star * lam)))
    return resid, r_star


def ray_project(
    system: ContactSystem,
    target: RayTarget,
    seed_point,
    tolerance: float = 1e-10,
    max_iter: int = 50,
) -> tuple[np.ndarray, float]:
    """Gauss-Newton solve of F(x) = r * Lambda with r > 0.

    Returns the landed point and scale.  The step solves the
    underdetermined linearization by least norm and is halved on
    residual increase.
    """
    lam = target.direction
    x = system.chart.point(seed_point)
    F = system.integral_values(x)
    r = max(float(F @ lam / (lam @ lam)), 1e-3)

    def resid(xv, rv):
        return system.integral_values(xv) - rv * lam

    g = resid(x, r)
    gn = float(np.max(np.abs(g)))
    for _ in range(max_iter):
        if gn <= tolerance * max(1.0, float(np.max(np.abs(lam)))):
            if r <= 0.0:
                raise RayProjectionError(f"landed at nonpositive scale r = {r:.3e}")
            return x, r
        J = np.hstack([system.integral_jacobian(x), -lam[:, None]])
        step, *_ = np.linalg.lstsq(J, -g, rcond=None)
        lam_step = 1.0
        for _ in range(25):
            x_try = x + lam_step * step[:-1]
            r_try = r + lam_step * step[-1]
            try:
                g_try = resid(x_try, r_try)
            except EvaluationDomainError:
                lam_step *= 0.5
                continue
            gn_try = float(np.max(np.abs(g_try)))
            if gn_try < gn:
                x, r, g, gn = x_try, r_try, g_try, gn_try
                break
            lam_step *= 0.5
        else:
            break
    raise RayProjectionError(
        f"no convergence onto the ray (residual {gn:.3e} after {max_iter} iterations)"
    )


def _ray_points(
    system: ContactSystem,
    target: RayTarget,
    n_points: int,
    seed: int | None,
) -> np.ndarray:
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    attempts = 0
    while len(found) < n_points and attempts < 20 * n_points:
        seeds = system.sample(rng, n_points)
        for s in seeds:
            attempts += 1
            try:
                x, _ = ray_project(system, target, s)
            except (RayProjectionError, EvaluationDomainError):
                continue
            found.append(x)
            if len(found) == n_points:
                break
    if len(found) < n_points:
        raise RayProjectionError(
            f"only {len(found)} of {n_points} ray points found from region samples"
        )
    return np.array(found)


def _bracket_matrix(system: ContactSystem, x) -> np.ndarray:
    m = len(system.integrals)
    out = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            val = system.chart.jacobi_bracket_at(
                system.integrals[a], system.integrals[b], x
            )
            out[a, b] = val
            out[b, a] = -val
    return out


def coisotropy_check(
    system: ContactSystem,
    target: RayTarget,
    points: np.ndarray | None = None,
    n_points: int = 25,
    tolerance: float = 1e-8,
    membership_tolerance: float = 1e-6,
    seed: int | None = 0,
) -> CoisotropyReport:
    """Cyclic sums f_a {f_b, f_c} + f_c {f_a, f_b} + f_b {f_c, f_a}.

    Evaluated over all index triples on points of the ray preimage
    (projected from region samples when not supplied).  The sums are
    totally antisymmetric, so repeated indices vanish identically and
    systems with fewer than three integrals pass vacuously.
    """
    if points is None:
        points = _ray_points(system, target, n_points, seed)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(system.integrals)
    worst, triple, where, worst_member = 0.0, (0, 0, 0), points[0], 0.0
    for x in points:
        member, r_star = _membership(system, target, x)
        scale = float(np.max(np.abs(system.integral_values(x))))
        if member > membership_tolerance * max(1.0, scale) or r_star <= 0.0:
            raise IntegrabilityError(
                f"point {x.tolist()} is not on the ray preimage "
                f"(residual {member:.3e}, r* {r_star:.3e})"
            )
        worst_member = max(worst_member, member)
        f = system.integral_values(x)
        bk = _bracket_matrix(system, x)
        for a in range(m):
            for b in range(m):
                for c in range(m):
                    val = abs(f[a] * bk[b, c] + f[c] * bk[a, b] + f[b] * bk[c, a])
                    if val > worst:
                        worst, triple, where = val, (a, b, c), x
    return CoisotropyReport(
        max_abs_sum=worst,
        worst_triple=triple,
        worst_point=np.asarray(where),
        max_membership_residual=worst_member,
        tolerance=tolerance,
        n_points=len(points),
        passed=bool(worst <= tolerance),
    )


def tangency_check(
    system: ContactSystem,
    target: RayTarget,
    points: np.ndarray | None = None,
    n_points: int = 25,
    tolerance: float = 1e-8,
    seed: int | None = 0,
) -> TangencyReport:
    """Contractions f_a X_c(f_b) - f_b X_c(f_a) on ray preimage points.

    Vanishing certifies the Hamiltonian fields are tangent to the
    two-forms' kernel along the ray preimage, the involutive route to
    its coisotropy.
    """
    if points is None:
        points = _ray_points(system, target, n_points, seed)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(system.integrals)
    worst, triple, where = 0.0, (0, 0, 0), points[0]
    for x in points:
        f = system.integral_values(x)
        grads = system.integral_jacobian(x)
        fields = [system.hamiltonian_field_at(c, x) for c in range(m)]
        for c in range(m):
            rates = grads @ fields[c]  # X_c applied to every integral
            for a in range(m):
                for b in range(a + 1, m):
                    val = abs(f[a] * rates[b] - f[b] * rates[a])
                    if val > worst:
                        worst, triple, where = val, (a, b, c), x
    return TangencyReport(
        max_abs_contraction=worst,
        worst_triple=triple,
        worst_point=np.asarray(where),
        tolerance=tolerance,
        n_points=len(points),
        passed=bool(worst <= tolerance),
    )


def dissipative_map_check(
    system: ContactSystem,
    target: RayTarget,
    points: np.ndarray | None = None,
    n_points: int = 25,
    tolerance: float = 1e-8,
    seed: int | None = 0,
) -> DissipativeMapReport:
    """Coisotropy plus rank on the same ray points.

    Together these certify the quotient construction that makes the
    induced map on ray space well defined, the working criterion for
    the dissipative analogue of a moment map.
    """
    if points is None:
        points = _ray_points(system, target, n_points, seed)
    co = coisotropy_check(system, target, points=points, tolerance=tolerance)
    rk = rank_check(system, points=points, tolerance=1e-8, seed=None)
    return DissipativeMapReport(
        coisotropy=co,
        min_rank=rk.min_rank,
        required_rank=rk.required_rank,
        passed=bool(co.passed and rk.passed),
    )


# ---------------------------------------------------------------------------
# Sections and angle coordinates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SectionReport:
    name: str
    sign: int
    max_target_residual: float
    residual_plus: float
    residual_minus: float
    max_horizontality: float
    tolerance: float
    n_samples: int
    passed: bool


def verify_section(
    symp_system: SympSystem,
    section: SectionSpec,
    n_samples: int = 25,
    tolerance: float = 1e-8,
    seed: int | None = 0,
) -> SectionReport:
    """Check F(chi(Lambda)) = +/-Lambda and chi*theta = 0 on the domain.

    The target identity is measured under both signs; the report records
    the convention that holds (sign 0 when neither does).
    """
    rng = np.random.default_rng(seed)
    lo, hi = section.domain[:, 0], section.domain[:, 1]
    lams = rng.uniform(lo, hi, size=(n_samples, len(section.params)))
    res_plus = res_minus = horiz = 0.0
    for lam in lams:
        point = section.chi_at(lam)
        if point.shape != (symp_system.dim,):
            raise SectionError(
                f"section {section.name!r} has {len(point)} components, "
                f"chart needs {symp_system.dim}"
            )
        if point[-1] <= 0.0:
            raise SectionError(
                f"section {section.name!r} leaves the chart (fiber "
                f"{point[-1]:.3e} at Lambda = {lam.tolist()})"
            )
        F = symp_system.integral_values(point)
        res_plus = max(res_plus, float(np.max(np.abs(F - lam))))
        res_minus = max(res_minus, float(np.max(np.abs(F + lam))))
        pullback = symp_system.chart.theta_at(point) @ section.chi_jacobian_at(lam)
        horiz = max(horiz, float(np.max(np.abs(pullback))))
    if res_plus <= tolerance:
        sign = 1
    elif res_minus <= tolerance:
        sign = -1
    else:
        sign = 0
    return SectionReport(
        name=section.name,
        sign=sign,
        max_target_residual=min(res_plus, res_minus),
        residual_plus=res_plus,
        residual_minus=res_minus,
        max_horizontality=horiz,
        tolerance=tolerance,
        n_samples=n_samples,
        passed=bool(sign != 0 and horiz <= tolerance),
    )


def _detect_sign(
    symp_system: SympSystem, section: SectionSpec, F_x: np.ndarray
) -> tuple[int, np.ndarray]:
    """Find s with F(chi(s * F_x)) = F_x and a positive fiber."""
    scale = max(1.0, float(np.max(np.abs(F_x))))
    for s in (1, -1):
        try:
            candidate = section.chi_at(s * F_x)
        except EvaluationDomainError:
            continue
        if candidate.shape != (symp_system.dim,) or candidate[-1] <= 0.0:
            continue
        if not np.isfinite(candidate).all():
            continue
        F_c = symp_system.integral_values(candidate)
        if float(np.max(np.abs(F_c - F_x))) <= 1e-6 * scale:
            return s, candidate
    raise SectionError(
        f"section {section.name!r} does not cover the ray of F = {F_x.tolist()}"
    )


def _generators(symp_system: SympSystem, M: np.ndarray) -> list[Expr]:
    """Integral combinations g_b = sum_c M[b, c] f_c as expressions."""
    gens: list[Expr] = []
    for row in M:
        term: Expr | None = None
        for c, coeff in enumerate(row):
            if coeff == 0.0:
                continue
            piece = (
                symp_system.integrals[c]
                if coeff == 1.0
                else Binary("*", Const(float(coeff)), symp_system.integrals[c])
            )
            term = piece if term is None else Binary("+", term, piece)
        if term is None:
            raise ValueError("basis matrix has a zero row")
        gens.append(term)
    return gens


def angle_solve(
    symp_system: SympSystem,
    section: SectionSpec,
    x,
    config: IntegratorConfig | None = None,
    basis: np.ndarray | None = None,
    sign: int | None = None,
    y0: np.ndarray | None = None,
    jacobian: np.ndarray | None = None,
    newton_tolerance: float = 1e-10,
    max_iter: int = 60,
    fd_step: float = 1e-6,
) -> ActionAngleResult:
    """Solve x = Phi(y; chi(sign * F(x))) for the angles y.

    Damped Newton from y = 0 (or the warm start y0) with the Jacobian of
    the flow composition by central differences of step fd_step; the
    Jacobian is reused between iterations and refreshed on stall.  Steps
    halve up to 20 times on residual increase.  The convergence target is
    newton_tolerance or the integrator's own error floor (rel_tol times
    the point scale), whichever is larger: the flow map cannot be
    resolved below its truncation error.

    Actions are A = M f(x_base) with the base integrals f; the relabeling
    denominator comes from the section (fallback: argmax |A_a|).
    """
    chart = symp_system.chart
    x = chart.point(x)
    cfg = config or IntegratorConfig()
    m = len(symp_system.integrals)
    M = np.eye(m) if basis is None else np.asarray(basis, dtype=float)
    if M.shape != (m, m):
        raise ValueError(f"basis must be {m} x {m}")
    N = np.linalg.inv(M)

    F_x = symp_system.integral_values(x)
    if sign is None:
        s, base = _detect_sign(symp_system, section, F_x)
    else:
        s = int(sign)
        base = section.chi_at(s * F_x)
        if base[-1] <= 0.0:
            raise SectionError(
                f"section {section.name!r} leaves the chart at the base point"
            )
    generators = _generators(symp_system, M) if basis is not None else None

    def phi(y: np.ndarray) -> np.ndarray:
        return group_action(symp_system, y, base, cfg, integrals=generators)

    def fd_jacobian(y: np.ndarray) -> np.ndarray:
        J = np.empty((symp_system.dim, m))
        for a in range(m):
            step = np.zeros(m)
            step[a] = fd_step
            J[:, a] = (phi(y + step) - phi(y - step)) / (2.0 * fd_step)
        return J

    scale = max(1.0, float(np.max(np.abs(x))))
    target = max(newton_tolerance, 10.0 * cfg.rel_tol * scale)

    y = np.zeros(m) if y0 is None else np.asarray(y0, dtype=float).copy()
    g = phi(y) - x
    gn = float(np.max(np.abs(g)))
    J = fd_jacobian(y) if jacobian is None else np.asarray(jacobian, dtype=float)
    fresh = jacobian is None
    iterations = 0
    while gn > target:
        if iterations >= max_iter:
            raise NewtonDivergenceError(
                f"no convergence after {max_iter} iterations (residual {gn:.3e})",
                gn,
                iterations,
            )
        iterations += 1
        delta, *_ = np.linalg.lstsq(J, -g, rcond=None)
        lam, improved = 1.0, False
        y_try = y
        g_try = g
        for _ in range(21):
            y_try = y + lam * delta
            try:
                g_try = phi(y_try) - x
            except (FlowError, ValueError, EvaluationDomainError):
                lam *= 0.5
                continue
            if float(np.max(np.abs(g_try))) <= (1.0 - 1e-4 * lam) * gn:
                improved = True
                break
            lam *= 0.5
        if improved:
            rate = float(np.max(np.abs(g_try))) / gn
            y, g = y_try, g_try
            gn = float(np.max(np.abs(g)))
            # slow linear contraction means the frozen Jacobian is stale
            if rate > 0.2 and gn > target:
                J = fd_jacobian(y)
                fresh = True
            else:
                fresh = False
        elif not fresh:
            J = fd_jacobian(y)
            fresh = True
        else:
            raise NewtonDivergenceError(
                f"stalled at residual {gn:.3e} after {iterations} iterations",
                gn,
                iterations,
            )

    f_base = symp_system.base.integral_values(x[:-1])
    A = M @ f_base
    if section.denominator_index is not None:
        d = section.denominator_index
    else:
        d = int(np.argmax(np.abs(A)))
    if abs(A[d]) < 1e-12:
        raise IntegrabilityError(
            f"action A_{d} vanishes at the query point (|A_d| = {abs(A[d]):.3e})"
        )
    A_tilde = np.array([-A[j] / A[d] for j in range(m) if j != d])
    return ActionAngleResult(
        y=y,
        A=A,
        A_tilde=A_tilde,
        denominator_index=d,
        M_matrix=M,
        N_matrix=N,
        sign=s,
        residual=gn,
        iterations=iterations,
        converged=True,
        jacobian=J,
    )


@dataclass(frozen=True)
class DarbouxReport:
    max_residual: float
    worst_point: np.ndarray
    fd_step: float
    tolerance: float
    n_points: int
    passed: bool


def darboux_verify(
    system: ContactSystem,
    section: SectionSpec,
    n_points: int = 25,
    points: np.ndarray | None = None,
    fd_step: float = 1e-5,
    tolerance: float = 1e-5,
    r_ref: float = 1.0,
    config: IntegratorConfig | None = None,
    basis: np.ndarray | None = None,
    seed: int | None = 0,
) -> DarbouxReport:
    """Check dy^d - sum_j Atilde_j dy^j = -eta / A_d at sampled points.

    The angle coordinates are differentiated by central differences of
    step fd_step in the base coordinates (the angles are fiberwise
    constant, so the lift uses the fixed reference fiber r_ref); each
    perturbed solve warm-starts from the center solution.  The default
    integrator here is tighter than usual: the difference quotient
    divides the angle error by fd_step, so the flow must be resolved a
    few orders below tolerance * fd_step.
    """
    symp = symplectize(system, r_range=(r_ref / 2.0, 2.0 * r_ref))
    if points is None:
        points = system.sample(np.random.default_rng(seed), n_points)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cfg = config or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)
    m = len(system.integrals)
    worst, where = 0.0, points[0]
    newton_tol = 1e-11
    for xb in points:
        center = angle_solve(
            symp,
            section,
            np.append(xb, r_ref),
            config=cfg,
            basis=basis,
            newton_tolerance=newton_tol,
        )
        d = center.denominator_index
        grad_y = np.empty((m, system.dim))
        for a in range(system.dim):
            offset = np.zeros(system.dim)
            offset[a] = fd_step
            plus = angle_solve(
                symp,
                section,
                np.append(xb + offset, r_ref),
                config=cfg,
                basis=basis,
                sign=center.sign,
                y0=center.y,
                jacobian=center.jacobian,
                newton_tolerance=newton_tol,
            )
            minus = angle_solve(
                symp,
                section,
                np.append(xb - offset, r_ref),
                config=cfg,
                basis=basis,
                sign=center.sign,
                y0=center.y,
                jacobian=center.jacobian,
                newton_tolerance=newton_tol,
            )
            grad_y[:, a] = (plus.y - minus.y) / (2.0 * fd_step)
        covector = grad_y[d].copy()
        k = 0
        for j in range(m):
            if j == d:
                continue
            covector -= center.A_tilde[k] * grad_y[j]
            k += 1
        target = -system.chart.eta_at(xb) / center.A[d]
        resid = float(np.max(np.abs(covector - target)))
        if resid > worst:
            worst, where = resid, xb
    return DarbouxReport(
        max_residual=worst,
        worst_point=np.asarray(where),
        fd_step=fd_step,
        tolerance=tolerance,
        n_points=len(points),
        passed=bool(worst <= tolerance),
    )


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------

def period_detect(
    system,
    f,
    x0,
    t_max: float,
    tolerance: float = 1e-6,
    config: IntegratorConfig | None = None,
    scan_points: int = 512,
) -> float | None:
    """Smallest t in (0, t_max] with |phi_t(x0) - x0| < tolerance.

    A dense forward trajectory provides candidate local minima of the
    return distance; each is refined by golden-section bracketing.
    Returns None when no return distance dips below the tolerance.
    """
    x0 = np.asarray(x0, dtype=float)
    scan_cfg = config or IntegratorConfig(max_step=t_max / scan_points)
    traj = integrate(system, f, x0, t_max, scan_cfg)
    if not traj.completed:
        raise FlowError(f"scan trajectory truncated ({traj.status})", traj)
    dist = np.max(np.abs(traj.points - x0), axis=1)
    refine_cfg = config or IntegratorConfig()

    def g(t: float) -> float:
        return float(np.max(np.abs(flow_map(system, f, x0, t, refine_cfg) - x0)))

    candidates = [
        k
        for k in range(1, len(dist) - 1)
        if dist[k] <= dist[k - 1] and dist[k] <= dist[k + 1]
    ]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    for k in candidates[:8]:
        lo, hi = float(traj.times[k - 1]), float(traj.times[k + 1])
        a, b = lo + (1 - invphi) * (hi - lo), lo + invphi * (hi - lo)
        ga, gb = g(a), g(b)
        for _ in range(60):
            if hi - lo < max(1e-12, 1e-4 * tolerance):
                break
            if ga <= gb:
                hi, b, gb = b, a, ga
                a = lo + (1 - invphi) * (hi - lo)
                ga = g(a)
            else:
                lo, a, ga = a, b, gb
                b = lo + invphi * (hi - lo)
                gb = g(b)
        t_star = (lo + hi) / 2.0
        if g(t_star) < tolerance:
            return t_star
    return None
