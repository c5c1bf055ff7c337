"""Symplectization of a contact chart over the trivial line bundle.

The symplectization of (M, eta) used here is M x R_+ with global fiber
coordinate r, potential one-form theta = r * eta (pulled back), and
symplectic form omega = -d theta.  A function f on M lifts to the
degree-1 homogeneous function f^S = -r * f; Hamiltonian fields solve
X^a omega_ab = (dF)_b, the Liouville field is r d/dr, and the Poisson
bracket {F, G} = X_F(G) satisfies {f^S, g^S} = -r {f, g} over the Jacobi
bracket downstairs.
"""

from __future__ import annotations

from typing import Callable, Sequence, Union

import numpy as np

from .expressions import (
    Binary,
    Expr,
    Unary,
    Var,
    free_variables,
    gradient_evaluator,
    parse,
)
from .geometry import ContactChart, ContactSystem

__all__ = [
    "SymplectizationError",
    "SingularStructureError",
    "SympChart",
    "SympSystem",
    "symplectize",
]

FunctionLike = Union[Expr, str, int]

_RESIDUAL_TOL = 1e-10


class SymplectizationError(RuntimeError):
    """Base class for symplectization-level numerical failures."""


class SingularStructureError(SymplectizationError):
    """omega is numerically degenerate at a point."""

    def __init__(self, point: np.ndarray, det: float):
        super().__init__(
            f"omega is singular at {np.asarray(point).tolist()} (det {det:.3e})"
        )
        self.point = np.asarray(point, dtype=float)
        self.det = det


def _scale_tol(tol: float, *values: float) -> float:
    scale = max(1.0, *(abs(v) for v in values)) if values else 1.0
    return tol * scale


class SympChart:
    """Chart on the symplectization of a contact chart.

    Coordinates are the base coordinates followed by the fiber r > 0.
    """

    def __init__(self, base: ContactChart, fiber: str = "r"):
        if fiber in base.coordinates:
            raise ValueError(f"fiber name {fiber!r} collides with a base coordinate")
        if not fiber.isidentifier():
            raise ValueError(f"fiber name {fiber!r} is not an identifier")
        self.base = base
        self.fiber = fiber
        self.coordinates = base.coordinates + (fiber,)
        self.dim = base.dim + 1
        # r * eta_a, kept as expressions for introspection and printing
        self.theta_coefficients = tuple(
            Binary("*", Var(fiber), c) for c in base.eta_coefficients
        ) + (parse("0"),)
        self._grad_cache: dict[Expr, Callable] = {}

    def point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of shape ({self.dim},), got {x.shape}")
        if x[-1] <= 0.0:
            raise ValueError(f"fiber coordinate must be positive, got {x[-1]}")
        return x

    def function(self, F: Expr | str) -> Expr:
        if isinstance(F, str):
            F = parse(F, self.coordinates)
        extra = free_variables(F) - set(self.coordinates)
        if extra:
            raise ValueError(f"function uses unknown names {sorted(extra)}")
        return F

    def value_and_gradient(self, F: Expr, x: np.ndarray) -> tuple[float, np.ndarray]:
        run = self._grad_cache.get(F)
        if run is None:
            run = self._grad_cache[F] = gradient_evaluator(F, self.coordinates)
        return run(x)

    def lift_function(self, f: Expr | str) -> Expr:
        """Degree-1 lift f^S = -(r * f) of a base function."""
        f = self.base.function(f)
        return Unary("neg", Binary("*", Var(self.fiber), f))

    def project_vector(self, v) -> np.ndarray:
        """Push a tangent vector down to the base (drop the fiber slot)."""
        v = np.asarray(v, dtype=float)
        return v[:-1]

    # -- structure tensors ----------------------------------------------------

    def theta_at(self, x) -> np.ndarray:
        x = self.point(x)
        out = np.zeros(self.dim)
        out[:-1] = x[-1] * self.base.eta_at(x[:-1])
        return out

    def omega_at(self, x) -> np.ndarray:
        """omega = -d theta assembled from the base coframe.

        With theta = (r eta_a, 0) the only blocks are the base block
        -r d(eta) and the mixed block omega_rb = -eta_b.
        """
        x = self.point(x)
        r = x[-1]
        xb = x[:-1]
        eta = self.base.eta_at(xb)
        out = np.zeros((self.dim, self.dim))
        out[:-1, :-1] = -r * self.base.deta_at(xb)
        out[-1, :-1] = -eta
        out[:-1, -1] = eta
        det = float(np.linalg.det(out))
        if abs(det) <= 1e-12:
            raise SingularStructureError(x, det)
        return out

    def liouville_field_at(self, x) -> np.ndarray:
        """Field solving i_Delta omega = -theta; equals r d/dr here."""
        x = self.point(x)
        omega = self.omega_at(x)
        delta = np.linalg.solve(omega.T, -self.theta_at(x))
        expected = np.zeros(self.dim)
        expected[-1] = x[-1]
        resid = float(np.max(np.abs(delta - expected)))
        if resid > _scale_tol(_RESIDUAL_TOL, x[-1]):
            raise SymplectizationError(
                f"Liouville field deviates from r d/dr by {resid:.3e} at {x.tolist()}"
            )
        return delta

    def homogeneity_residual(self, F: Expr | str, x, degree: float = 1.0) -> float:
        """|Delta(F) - degree * F| = |r dF/dr - degree * F|."""
        F = self.function(F)
        x = self.point(x)
        value, grad = self.value_and_gradient(F, x)
        return abs(x[-1] * grad[-1] - degree * value)

    # -- Hamiltonian structure --------------------------------------------------

    def hamiltonian_field_at(self, F: Expr | str, x) -> np.ndarray:
        """Symplectic Hamiltonian field, X^a omega_ab = (dF)_b.

        For degree-1 homogeneous F the identity theta(X_F) = F is checked.
        Standard-form bases use a closed-form solve.
        """
        F = self.function(F)
        x = self.point(x)
        value, grad = self.value_and_gradient(F, x)
        if self.base.darboux:
            X = _standard_field(self.base.n, x, grad)
            theta_x = self.theta_at(x)
        else:
            omega = self.omega_at(x)
            X = np.linalg.solve(omega.T, grad)
            resid = float(np.max(np.abs(omega.T @ X - grad)))
            if resid > _scale_tol(_RESIDUAL_TOL, *grad):
                raise SymplectizationError(
                    f"field solve residual {resid:.3e} at {x.tolist()}"
                )
            theta_x = self.theta_at(x)
        if abs(x[-1] * grad[-1] - value) <= _scale_tol(_RESIDUAL_TOL, value):
            pairing = float(theta_x @ X)
            if abs(pairing - value) > _scale_tol(1e-8, value, *X):
                raise SymplectizationError(
                    f"theta(X_F) = F violated by {abs(pairing - value):.3e} "
                    f"for homogeneous F at {x.tolist()}"
                )
        return X

    def poisson_bracket_at(self, F: Expr | str, G: Expr | str, x) -> float:
        """Poisson bracket {F, G} = X_F(G) of the potential theta."""
        F, G = self.function(F), self.function(G)
        x = self.point(x)
        XF = self.hamiltonian_field_at(F, x)
        _, gG = self.value_and_gradient(G, x)
        return float(gG @ XF)

    def __repr__(self) -> str:
        return f"SympChart({self.base!r}, fiber={self.fiber!r})"


def _standard_field(n: int, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # closed form for theta = r(dz - p dq): the solve of X^a omega_ab = dF_b
    r = x[-1]
    p = x[n : 2 * n]
    Fq = grad[:n]
    Fp = grad[n : 2 * n]
    Fz = grad[2 * n]
    Fr = grad[2 * n + 1]
    X = np.empty(2 * n + 2)
    X[:n] = -Fp / r
    X[n : 2 * n] = (Fq + p * Fz) / r
    X[2 * n] = Fr - (p @ Fp) / r
    X[2 * n + 1] = -Fz
    return X


class SympSystem:
    """Symplectization of a ContactSystem with the lifted integrals."""

    def __init__(
        self,
        base: ContactSystem,
        r_range: Sequence[float] = (0.5, 2.0),
        fiber: str = "r",
    ):
        self.base = base
        self.chart = SympChart(base.chart, fiber)
        self.integrals = tuple(self.chart.lift_function(f) for f in base.integrals)
        lo, hi = float(r_range[0]), float(r_range[1])
        if not 0.0 < lo <= hi:
            raise ValueError(f"fiber range must satisfy 0 < lo <= hi, got {r_range}")
        if base.region is not None:
            self.region = np.vstack([base.region, [lo, hi]])
        else:
            self.region = None
        # the fiber stays positive along any flow in this chart
        self.positive_indices = tuple(base.positive_indices) + (self.chart.dim - 1,)

    @property
    def coordinates(self) -> tuple[str, ...]:
        return self.chart.coordinates

    @property
    def dim(self) -> int:
        return self.chart.dim

    def resolve(self, F: FunctionLike) -> Expr:
        if isinstance(F, int):
            return self.integrals[F]
        return self.chart.function(F)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.region is None:
            raise ValueError("system has no sampling region")
        lo, hi = self.region[:, 0], self.region[:, 1]
        return rng.uniform(lo, hi, size=(count, self.dim))

    def integral_values(self, x) -> np.ndarray:
        x = self.chart.point(x)
        return np.array(
            [self.chart.value_and_gradient(F, x)[0] for F in self.integrals]
        )

    def hamiltonian_field_at(self, F: FunctionLike, x) -> np.ndarray:
        return self.chart.hamiltonian_field_at(self.resolve(F), x)

    def field_evaluator(self, F: FunctionLike) -> Callable[[np.ndarray], np.ndarray]:
        """Closure computing X_F without per-call invariant checks."""
        F = self.resolve(F)
        chart = self.chart
        if not chart.base.darboux:
            return lambda x: chart.hamiltonian_field_at(F, x)
        n = chart.base.n
        run = gradient_evaluator(F, chart.coordinates)

        def field(x: np.ndarray) -> np.ndarray:
            _, grad = run(x)
            return _standard_field(n, x, grad)

        return field


def symplectize(system: ContactSystem, r_range: Sequence[float] = (0.5, 2.0),
                fiber: str = "r") -> SympSystem:
    """Build the symplectization of a system with its lifted integrals."""
    return SympSystem(system, r_range=r_range, fiber=fiber)
