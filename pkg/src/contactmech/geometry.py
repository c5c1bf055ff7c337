"""Contact charts: coframe, Reeb field, Hamiltonian fields, Jacobi bracket.

A chart holds 2n+1 coordinate names and the coefficient functions of a
contact one-form eta.  Coordinates are ordered (q_1..q_n, p_1..p_n, z);
when eta is the standard form dz - p_i dq^i the chart takes closed-form
fast paths, otherwise every operator goes through the flat-map solve.

The flat map sends a vector v to i_v(d eta) + eta(v) eta.  Its matrix is
B_ab = (d eta)_ab + eta_a eta_b with the row convention
(d eta)_ab = d_a eta_b - d_b eta_a, so (flat v)_b = v^a B_ab.  The
Hamiltonian field of f solves flat(X_f) = df - (R(f) + f) eta and the
Jacobi bracket is {f, g} = X_f(g) + g R(f).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .expressions import (
    Binary,
    Const,
    Expr,
    Unary,
    Var,
    eval_jet2,
    evaluate,
    free_variables,
    gradient_evaluator,
    parse,
)

__all__ = [
    "GeometryError",
    "ContactConditionError",
    "ConformalFactorError",
    "ContactChart",
    "ContactSystem",
    "ContactConditionReport",
    "conformal_rescale",
    "contact_condition_check",
]

FunctionLike = Union[Expr, str, int]


class GeometryError(RuntimeError):
    """Base class for chart-level numerical failures."""


class ContactConditionError(GeometryError):
    """The coframe fails the contact condition (singular flat matrix)."""

    def __init__(self, point: np.ndarray, det: float):
        super().__init__(
            f"flat matrix is singular at {np.asarray(point).tolist()} (det {det:.3e})"
        )
        self.point = np.asarray(point, dtype=float)
        self.det = det


class ConformalFactorError(GeometryError):
    """A conformal factor vanishes at a sampled point."""

    def __init__(self, point: np.ndarray):
        super().__init__(f"conformal factor vanishes at {np.asarray(point).tolist()}")
        self.point = np.asarray(point, dtype=float)


_SINGULAR_DET = 1e-12
_RESIDUAL_TOL = 1e-10
_FD_STEP = 1e-5


def _as_expr(f: Expr | str, names: Sequence[str]) -> Expr:
    if isinstance(f, str):
        return parse(f, names)
    return f


def _scale_tol(tol: float, *values: float) -> float:
    scale = max(1.0, *(abs(v) for v in values)) if values else 1.0
    return tol * scale


class ContactChart:
    """Coordinate chart with a contact coframe.

    Args:
        coordinates: 2n+1 coordinate names, ordered (q_1..q_n, p_1..p_n, z).
        eta: coefficient functions of the contact form, one per coordinate;
            strings are parsed against the coordinate names.  None means the
            standard form dz - p_i dq^i.
        assume_darboux: force (True) or forbid (False) the closed-form fast
            paths; None autodetects by structural comparison of the
            coefficients with the standard form.
    """

    def __init__(
        self,
        coordinates: Sequence[str],
        eta: Sequence[Expr | str] | None = None,
        *,
        assume_darboux: bool | None = None,
    ):
        names = tuple(coordinates)
        if len(names) % 2 != 1:
            raise ValueError(f"need an odd number of coordinates, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError("coordinate names must be unique")
        for name in names:
            if not name.isidentifier():
                raise ValueError(f"coordinate name {name!r} is not an identifier")
        self.coordinates = names
        self.dim = len(names)
        self.n = (self.dim - 1) // 2

        standard = _standard_coefficients(names)
        if eta is None:
            coeffs = standard
        else:
            if len(eta) != self.dim:
                raise ValueError(f"eta needs {self.dim} coefficients, got {len(eta)}")
            coeffs = tuple(_as_expr(c, names) for c in eta)
            for c in coeffs:
                extra = free_variables(c) - set(names)
                if extra:
                    raise ValueError(f"eta coefficient uses unknown names {sorted(extra)}")
        self.eta_coefficients = coeffs
        if assume_darboux is None:
            self.darboux = coeffs == standard
        else:
            if assume_darboux and coeffs != standard:
                raise ValueError("assume_darboux=True but eta is not the standard form")
            self.darboux = assume_darboux

        self._grad_cache: dict[Expr, Callable] = {}
        self._coeff_grads = tuple(gradient_evaluator(c, names) for c in coeffs)

    # -- helpers -------------------------------------------------------------

    def point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of shape ({self.dim},), got {x.shape}")
        return x

    def env(self, x) -> dict[str, float]:
        return dict(zip(self.coordinates, map(float, x)))

    def function(self, f: Expr | str) -> Expr:
        f = _as_expr(f, self.coordinates)
        extra = free_variables(f) - set(self.coordinates)
        if extra:
            raise ValueError(f"function uses unknown names {sorted(extra)}")
        return f

    def value_and_gradient(self, f: Expr, x: np.ndarray) -> tuple[float, np.ndarray]:
        run = self._grad_cache.get(f)
        if run is None:
            run = self._grad_cache[f] = gradient_evaluator(f, self.coordinates)
        return run(x)

    # -- coframe -------------------------------------------------------------

    def eta_at(self, x) -> np.ndarray:
        x = self.point(x)
        if self.darboux:
            n = self.n
            out = np.zeros(self.dim)
            out[:n] = -x[n : 2 * n]
            out[-1] = 1.0
            return out
        return np.array([run(x)[0] for run in self._coeff_grads])

    def deta_at(self, x) -> np.ndarray:
        x = self.point(x)
        n = self.n
        if self.darboux:
            out = np.zeros((self.dim, self.dim))
            for i in range(n):
                out[i, n + i] = 1.0
                out[n + i, i] = -1.0
            return out
        jac = np.empty((self.dim, self.dim))
        for b, run in enumerate(self._coeff_grads):
            jac[:, b] = run(x)[1]
        return jac - jac.T

    def flat_matrix_at(self, x) -> np.ndarray:
        x = self.point(x)
        eta = self.eta_at(x)
        B = self.deta_at(x) + np.outer(eta, eta)
        det = float(np.linalg.det(B))
        if abs(det) <= _SINGULAR_DET:
            raise ContactConditionError(x, det)
        return B

    def flat_at(self, x, v) -> np.ndarray:
        """Musical flat of a vector: (flat v)_b = v^a B_ab."""
        v = np.asarray(v, dtype=float)
        return self.flat_matrix_at(x).T @ v

    def sharp_at(self, x, w) -> np.ndarray:
        """Inverse of the flat map applied to a covector."""
        w = np.asarray(w, dtype=float)
        return np.linalg.solve(self.flat_matrix_at(x).T, w)

    # -- Reeb field ----------------------------------------------------------

    def reeb_at(self, x) -> np.ndarray:
        x = self.point(x)
        if self.darboux:
            out = np.zeros(self.dim)
            out[-1] = 1.0
            return out
        eta = self.eta_at(x)
        B = self.flat_matrix_at(x)
        reeb = np.linalg.solve(B.T, eta)
        resid = float(np.max(np.abs(B.T @ reeb - eta)))
        if resid > _scale_tol(_RESIDUAL_TOL, *eta):
            raise GeometryError(f"Reeb solve residual {resid:.3e} at {x.tolist()}")
        return reeb

    def reeb_derivative(self, f: Expr | str, x) -> float:
        """R(f), the Reeb derivative of a function."""
        f = self.function(f)
        x = self.point(x)
        _, grad = self.value_and_gradient(f, x)
        if self.darboux:
            return float(grad[-1])
        return float(grad @ self.reeb_at(x))

    # -- Hamiltonian fields ----------------------------------------------------

    def hamiltonian_field_at(self, f: Expr | str, x) -> np.ndarray:
        """Contact Hamiltonian field X_f, with eta(X_f) = -f.

        Standard-form charts use the closed-form expression
        X_f = (df/dp_i) d_q^i - (df/dq^i + p_i df/dz) d_p^i
              + (p_i df/dp_i - f) d_z;
        otherwise flat(X_f) = df - (R(f) + f) eta is solved directly.
        """
        f = self.function(f)
        x = self.point(x)
        value, grad = self.value_and_gradient(f, x)
        n = self.n
        if self.darboux:
            p = x[n : 2 * n]
            X = np.empty(self.dim)
            X[:n] = grad[n : 2 * n]
            X[n : 2 * n] = -(grad[:n] + p * grad[-1])
            X[-1] = p @ grad[n : 2 * n] - value
            pairing = X[-1] - p @ X[:n]
        else:
            eta = self.eta_at(x)
            reeb = self.reeb_at(x)
            rhs = grad - (grad @ reeb + value) * eta
            X = np.linalg.solve(self.flat_matrix_at(x).T, rhs)
            pairing = eta @ X
        resid = abs(pairing + value)
        if resid > _scale_tol(1e-8, value, *X):
            raise GeometryError(
                f"field invariant eta(X_f) = -f violated by {resid:.3e} at {x.tolist()}"
            )
        return X

    def hamiltonian_field_jacobian_at(
        self, f: Expr | str, x, method: str = "auto"
    ) -> np.ndarray:
        """Jacobian d_a X_f^i, rows i, columns a.

        On standard-form charts "auto"/"jet" differentiates the closed form
        with exact second-order jets; "fd" (forced, or any non-standard
        coframe) uses central differences of the field map with step 1e-5.
        """
        if method not in ("auto", "jet", "fd"):
            raise ValueError(f"unknown method {method!r}")
        f = self.function(f)
        x = self.point(x)
        n = self.n
        if method != "fd" and self.darboux:
            jet = eval_jet2(f, self.coordinates, x)
            g, H = jet.gradient, jet.hessian
            p = x[n : 2 * n]
            J = np.empty((self.dim, self.dim))
            J[:n] = H[n : 2 * n]
            J[n : 2 * n] = -(H[:n] + np.outer(p, H[-1]))
            for i in range(n):
                J[n + i, n + i] -= g[-1]
            J[-1] = p @ H[n : 2 * n] - g
            J[-1, n : 2 * n] += g[n : 2 * n]
            return J
        if method == "jet":
            raise ValueError("jet Jacobians need the standard coframe")
        J = np.empty((self.dim, self.dim))
        for a in range(self.dim):
            step = np.zeros(self.dim)
            step[a] = _FD_STEP
            J[:, a] = (
                self.hamiltonian_field_at(f, x + step)
                - self.hamiltonian_field_at(f, x - step)
            ) / (2.0 * _FD_STEP)
        return J

    def field_commutator_at(
        self, f: Expr | str, g: Expr | str, x, method: str = "auto"
    ) -> np.ndarray:
        """Lie bracket [X_f, X_g] of two Hamiltonian fields."""
        x = self.point(x)
        Xf = self.hamiltonian_field_at(f, x)
        Xg = self.hamiltonian_field_at(g, x)
        Jf = self.hamiltonian_field_jacobian_at(f, x, method=method)
        Jg = self.hamiltonian_field_jacobian_at(g, x, method=method)
        return Jg @ Xf - Jf @ Xg

    # -- brackets --------------------------------------------------------------

    def jacobi_bracket_at(self, f: Expr | str, g: Expr | str, x) -> float:
        """Jacobi bracket {f, g} = X_f(g) + g R(f).

        Both defining expressions are evaluated and must agree to 1e-10
        (relative to the value scale); the first is returned.
        """
        f, g = self.function(f), self.function(g)
        x = self.point(x)
        fv, fg = self.value_and_gradient(f, x)
        gv, gg = self.value_and_gradient(g, x)
        Xf = self.hamiltonian_field_at(f, x)
        Xg = self.hamiltonian_field_at(g, x)
        if self.darboux:
            rf, rg = fg[-1], gg[-1]
        else:
            reeb = self.reeb_at(x)
            rf, rg = fg @ reeb, gg @ reeb
        first = float(gg @ Xf + gv * rf)
        second = float(-(fg @ Xg) - fv * rg)
        if abs(first - second) > _scale_tol(_RESIDUAL_TOL, first, second):
            raise GeometryError(
                f"bracket expressions disagree by {abs(first - second):.3e} at {x.tolist()}"
            )
        return first

    def lambda_pairing_at(self, f: Expr | str, g: Expr | str, x) -> float:
        """Bivector pairing Lambda(df, dg) = {f, g} + f R(g) - g R(f)."""
        f, g = self.function(f), self.function(g)
        x = self.point(x)
        fv, fg = self.value_and_gradient(f, x)
        gv, gg = self.value_and_gradient(g, x)
        B = self.flat_matrix_at(x)
        u = np.linalg.solve(B.T, fg)
        v = np.linalg.solve(B.T, gg)
        value = float(-(u @ self.deta_at(x) @ v))
        if self.darboux:
            rf, rg = fg[-1], gg[-1]
        else:
            reeb = self.reeb_at(x)
            rf, rg = fg @ reeb, gg @ reeb
        bracket = self.jacobi_bracket_at(f, g, x)
        expected = bracket + fv * rg - gv * rf
        if abs(value - expected) > _scale_tol(_RESIDUAL_TOL, value, expected):
            raise GeometryError(
                f"Lambda pairing disagrees with bracket identity by "
                f"{abs(value - expected):.3e} at {x.tolist()}"
            )
        return value

    def __repr__(self) -> str:
        kind = "standard" if self.darboux else "general"
        return f"ContactChart({list(self.coordinates)}, {kind})"

    @classmethod
    def standard(cls, n: int, names: Sequence[str] | None = None) -> "ContactChart":
        """Standard chart dz - p_i dq^i on R^(2n+1)."""
        if names is None:
            if n == 0:
                names = ("z",)
            elif n == 1:
                names = ("q", "p", "z")
            else:
                names = tuple(
                    [f"q{i}" for i in range(1, n + 1)]
                    + [f"p{i}" for i in range(1, n + 1)]
                    + ["z"]
                )
        return cls(names)


def _standard_coefficients(names: Sequence[str]) -> tuple[Expr, ...]:
    n = (len(names) - 1) // 2
    coeffs: list[Expr] = []
    for i in range(n):
        coeffs.append(Unary("neg", Var(names[n + i])))
    coeffs.extend(Const(0.0) for _ in range(n))
    coeffs.append(Const(1.0))
    return tuple(coeffs)


# ---------------------------------------------------------------------------
# Systems: chart + integrals + sampling region
# ---------------------------------------------------------------------------

class ContactSystem:
    """A chart with n+1 candidate integrals and a sampling box.

    Args:
        chart: the contact chart.
        integrals: n+1 functions, strings parsed against the chart.
        region: per-coordinate (low, high) sampling bounds; mapping keyed by
            coordinate name or an array of shape (dim, 2).
        positive: coordinate names constrained positive along flows (used as
            trajectory domain guards).
    """

    def __init__(
        self,
        chart: ContactChart,
        integrals: Sequence[Expr | str],
        region: Mapping[str, Sequence[float]] | np.ndarray | None = None,
        positive: Sequence[str] = (),
    ):
        self.chart = chart
        self.integrals = tuple(chart.function(f) for f in integrals)
        if len(self.integrals) != chart.n + 1:
            raise ValueError(
                f"need {chart.n + 1} integrals for n = {chart.n}, got {len(self.integrals)}"
            )
        self.region = _region_bounds(chart, region)
        for name in positive:
            if name not in chart.coordinates:
                raise ValueError(f"positive constraint on unknown coordinate {name!r}")
        self.positive = tuple(positive)
        self.positive_indices = tuple(chart.coordinates.index(p) for p in positive)

    @property
    def coordinates(self) -> tuple[str, ...]:
        return self.chart.coordinates

    @property
    def dim(self) -> int:
        return self.chart.dim

    def resolve(self, f: FunctionLike) -> Expr:
        """Accept an integral index, a source string, or an expression."""
        if isinstance(f, int):
            return self.integrals[f]
        return self.chart.function(f)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.region is None:
            raise ValueError("system has no sampling region")
        lo, hi = self.region[:, 0], self.region[:, 1]
        return rng.uniform(lo, hi, size=(count, self.dim))

    def integral_values(self, x) -> np.ndarray:
        x = self.chart.point(x)
        return np.array([self.chart.value_and_gradient(f, x)[0] for f in self.integrals])

    def integral_jacobian(self, x) -> np.ndarray:
        """Rows are the gradients of the integrals (the matrix TF)."""
        x = self.chart.point(x)
        return np.array([self.chart.value_and_gradient(f, x)[1] for f in self.integrals])

    def hamiltonian_field_at(self, f: FunctionLike, x) -> np.ndarray:
        return self.chart.hamiltonian_field_at(self.resolve(f), x)

    def field_evaluator(self, f: FunctionLike) -> Callable[[np.ndarray], np.ndarray]:
        """Closure computing X_f, kept allocation-light for integrator loops."""
        f = self.resolve(f)
        chart = self.chart
        if not chart.darboux:
            return lambda x: chart.hamiltonian_field_at(f, x)
        n = chart.n
        dim = chart.dim
        run = gradient_evaluator(f, chart.coordinates)

        def field(x: np.ndarray) -> np.ndarray:
            value, grad = run(x)
            p = x[n : 2 * n]
            X = np.empty(dim)
            X[:n] = grad[n : 2 * n]
            X[n : 2 * n] = -(grad[:n] + p * grad[-1])
            X[-1] = p @ grad[n : 2 * n] - value
            return X

        return field

    def conformal_rescale(self, factor: Expr | str, n_samples: int = 64, seed: int = 0):
        """Chart with coframe scaled by `factor`, vetted on sampled points."""
        factor = self.chart.function(factor)
        samples = self.sample(np.random.default_rng(seed), n_samples)
        return conformal_rescale(self.chart, factor, samples)


def _region_bounds(chart: ContactChart, region) -> np.ndarray | None:
    if region is None:
        return None
    if isinstance(region, Mapping):
        missing = set(chart.coordinates) - set(region)
        extra = set(region) - set(chart.coordinates)
        if missing or extra:
            raise ValueError(
                f"region keys must match coordinates (missing {sorted(missing)}, "
                f"extra {sorted(extra)})"
            )
        bounds = np.array([region[name] for name in chart.coordinates], dtype=float)
    else:
        bounds = np.asarray(region, dtype=float)
    if bounds.shape != (chart.dim, 2):
        raise ValueError(f"region must have shape ({chart.dim}, 2)")
    if np.any(bounds[:, 0] > bounds[:, 1]):
        raise ValueError("region lower bounds exceed upper bounds")
    return bounds


# ---------------------------------------------------------------------------
# Chart-level checks
# ---------------------------------------------------------------------------

def conformal_rescale(
    chart: ContactChart, factor: Expr | str, samples: np.ndarray | None = None
) -> ContactChart:
    """New chart with coframe a*eta.

    The factor must be nowhere zero; when sample points are supplied it is
    checked there and a vanishing value raises ConformalFactorError.  A
    structurally constant factor of one returns the chart unchanged.
    """
    factor = chart.function(factor)
    if factor == Const(1.0):
        return chart
    if samples is not None:
        for x in np.atleast_2d(np.asarray(samples, dtype=float)):
            if abs(evaluate(factor, chart.env(x))) <= 1e-12:
                raise ConformalFactorError(x)
    coeffs = tuple(Binary("*", factor, c) for c in chart.eta_coefficients)
    return ContactChart(chart.coordinates, coeffs)


@dataclass(frozen=True)
class ContactConditionReport:
    min_abs_det: float
    worst_point: np.ndarray
    threshold: float
    n_points: int
    passed: bool


def contact_condition_check(
    chart: ContactChart, points: np.ndarray, threshold: float = 1e-8
) -> ContactConditionReport:
    """Minimum |det B| over sample points; passes above the threshold."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.inf
    worst = points[0]
    for x in points:
        eta = chart.eta_at(x)
        B = chart.deta_at(x) + np.outer(eta, eta)
        det = abs(float(np.linalg.det(B)))
        if det < best:
            best, worst = det, x
    return ContactConditionReport(
        min_abs_det=best,
        worst_point=np.asarray(worst),
        threshold=threshold,
        n_points=len(points),
        passed=bool(best > threshold),
    )
