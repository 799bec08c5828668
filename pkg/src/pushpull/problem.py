"""Quadratic agent costs, convex constraint sets and a centralized oracle.

Each agent ``i`` holds a private cost ``f_i(x) = (x - c_i)^T P_i (x - c_i)``.
The agents jointly minimize the average ``f = (1/n) sum_i f_i`` over a shared
closed convex set ``X``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ConvergenceError(RuntimeError):
    """Raised when an iterative routine hits its iteration cap.

    The last iterate and its residual are kept so callers can decide whether
    the result is still usable.
    """

    def __init__(self, message: str, last_iterate=None, residual: float = float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def _as_vector(point, dimension: int | None = None) -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if dimension is not None and arr.shape[-1] != dimension:
        raise ValueError(f"expected dimension {dimension}, got shape {arr.shape}")
    return arr


def jacobi_eigenvalues(matrix, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Returns the eigenvalues in ascending order. Only intended for the small
    curvature matrices used here (d of a few units).
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0.0))):
        raise ValueError("matrix must be symmetric")
    a = 0.5 * (a + a.T)
    d = a.shape[0]
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


# ---------------------------------------------------------------------------
# Costs


@dataclass(frozen=True)
class QuadraticCost:
    """``f(x) = (x - center)^T curvature (x - center)`` with SPD curvature."""

    center: np.ndarray
    curvature: np.ndarray

    def __post_init__(self):
        center = _as_vector(self.center)
        curvature = np.atleast_2d(np.asarray(self.curvature, dtype=float))
        if curvature.shape != (center.size, center.size):
            raise ValueError(
                f"curvature shape {curvature.shape} does not match center dimension {center.size}"
            )
        eig = jacobi_eigenvalues(curvature)
        if eig[0] <= 0.0:
            raise ValueError(f"curvature must be positive definite (smallest eigenvalue {eig[0]})")
        center.setflags(write=False)
        curvature = curvature.copy()
        curvature.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "curvature", curvature)

    @property
    def dimension(self) -> int:
        return self.center.size

    def value(self, point) -> float:
        diff = _as_vector(point, self.dimension) - self.center
        return float(diff @ self.curvature @ diff)

    def gradient(self, point) -> np.ndarray:
        return gradient(self, point)


def gradient(cost: QuadraticCost, point) -> np.ndarray:
    """Closed-form gradient ``2 P (x - c)``."""
    diff = _as_vector(point, cost.dimension) - cost.center
    return 2.0 * (cost.curvature @ diff)


# ---------------------------------------------------------------------------
# Constraint sets


class ConstraintSet:
    """Base class for closed convex sets with a closed-form projection.

    ``project`` accepts a single point of shape ``(d,)`` or a stack of points
    of shape ``(m, d)`` and projects each row.
    """

    dimension: int | None = None

    def project(self, point) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def violation(self, point) -> np.ndarray:
        """Distance from each point to the set (0 for members)."""
        pts = _as_vector(point, self.dimension)
        return np.linalg.norm(pts - self.project(pts), axis=-1)

    def contains(self, point, tol: float = 1e-12) -> bool:
        return bool(np.all(self.violation(point) <= tol))


@dataclass(frozen=True)
class WholeSpace(ConstraintSet):
    dimension: int | None = None

    def project(self, point) -> np.ndarray:
        return np.array(_as_vector(point, self.dimension), copy=True)


@dataclass(frozen=True)
class Ball(ConstraintSet):
    """Closed Euclidean ball."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = _as_vector(self.center)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dimension(self) -> int:
        return self.center.size

    def project(self, point) -> np.ndarray:
        pts = _as_vector(point, self.dimension)
        diff = pts - self.center
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        scale = np.where(dist > self.radius, self.radius / np.where(dist > 0, dist, 1.0), 1.0)
        return self.center + diff * scale

    def violation(self, point) -> np.ndarray:
        pts = _as_vector(point, self.dimension)
        return np.maximum(np.linalg.norm(pts - self.center, axis=-1) - self.radius, 0.0)


@dataclass(frozen=True)
class Halfspace(ConstraintSet):
    """The set ``{x : normal . x >= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = _as_vector(self.normal)
        if not np.any(normal):
            raise ValueError("normal must be nonzero")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def dimension(self) -> int:
        return self.normal.size

    def project(self, point) -> np.ndarray:
        pts = _as_vector(point, self.dimension)
        gap = self.offset - pts @ self.normal
        step = np.maximum(gap, 0.0) / (self.normal @ self.normal)
        return pts + np.multiply.outer(step, self.normal)

    def violation(self, point) -> np.ndarray:
        pts = _as_vector(point, self.dimension)
        return np.maximum(self.offset - pts @ self.normal, 0.0) / np.linalg.norm(self.normal)


@dataclass(frozen=True)
class Box(ConstraintSet):
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, upper = _as_vector(self.lower), _as_vector(self.upper)
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same shape")
        if np.any(lower > upper):
            raise ValueError("box is empty: lower > upper somewhere")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.size

    def project(self, point) -> np.ndarray:
        return np.clip(_as_vector(point, self.dimension), self.lower, self.upper)


def project(constraint: ConstraintSet, point) -> np.ndarray:
    """Euclidean projection of ``point`` onto ``constraint``."""
    return constraint.project(point)


# ---------------------------------------------------------------------------
# Problem instance


def global_constants(costs: Sequence[QuadraticCost]) -> tuple[float, float]:
    """Strong convexity and smoothness moduli shared by every agent cost.

    For ``f_i = (x - c)^T P_i (x - c)`` the Hessian is ``2 P_i``, so
    ``mu = 2 min_i lambda_min(P_i)`` and ``L = 2 max_i lambda_max(P_i)``.
    """
    if isinstance(costs, ProblemInstance):
        costs = costs.costs
    lo, hi = np.inf, -np.inf
    for cost in costs:
        eig = jacobi_eigenvalues(cost.curvature)
        if eig[0] <= 0:
            raise ValueError("curvature must be positive definite")
        lo, hi = min(lo, eig[0]), max(hi, eig[-1])
    return 2.0 * lo, 2.0 * hi


@dataclass(frozen=True)
class ProblemInstance:
    """``min_{x in X} (1/n) sum_i f_i(x)`` with quadratic ``f_i``."""

    costs: tuple[QuadraticCost, ...]
    constraint: ConstraintSet
    mu: float = field(default=None)
    lipschitz: float = field(default=None)

    def __post_init__(self):
        costs = tuple(self.costs)
        if not costs:
            raise ValueError("at least one cost is required")
        d = costs[0].dimension
        if any(c.dimension != d for c in costs):
            raise ValueError("all costs must share the same dimension")
        if self.constraint.dimension is not None and self.constraint.dimension != d:
            raise ValueError("constraint dimension does not match the costs")
        object.__setattr__(self, "costs", costs)
        mu, lip = global_constants(costs)
        if self.mu is None:
            object.__setattr__(self, "mu", mu)
        elif self.mu > mu * (1 + 1e-12):
            raise ValueError(f"mu={self.mu} exceeds the realized strong convexity {mu}")
        if self.lipschitz is None:
            object.__setattr__(self, "lipschitz", lip)
        elif self.lipschitz < lip * (1 - 1e-12):
            raise ValueError(f"lipschitz={self.lipschitz} is below the realized smoothness {lip}")
        if not 0 < self.mu <= self.lipschitz:
            raise ValueError("need 0 < mu <= lipschitz")
        centers = np.stack([c.center for c in costs])
        curvatures = np.stack([c.curvature for c in costs])
        centers.setflags(write=False)
        curvatures.setflags(write=False)
        object.__setattr__(self, "_centers", centers)
        object.__setattr__(self, "_curvatures", curvatures)

    @property
    def n_agents(self) -> int:
        return len(self.costs)

    @property
    def dimension(self) -> int:
        return self.costs[0].dimension

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def curvatures(self) -> np.ndarray:
        return self._curvatures

    def local_gradients(self, xs) -> np.ndarray:
        """Row ``i`` is ``grad f_i(xs[i])``; ``xs`` has shape ``(n, d)``."""
        xs = np.asarray(xs, dtype=float)
        if xs.shape != self._centers.shape:
            raise ValueError(f"expected shape {self._centers.shape}, got {xs.shape}")
        return 2.0 * np.einsum("ijk,ik->ij", self._curvatures, xs - self._centers)

    def local_gradient(self, i: int, point) -> np.ndarray:
        return gradient(self.costs[i], point)

    def global_gradient(self, point) -> np.ndarray:
        """Gradient of the average cost ``f = (1/n) sum_i f_i``."""
        point = _as_vector(point, self.dimension)
        diffs = point - self._centers
        return 2.0 * np.einsum("ijk,ik->j", self._curvatures, diffs) / self.n_agents

    def objective(self, point) -> float:
        return float(np.mean([c.value(point) for c in self.costs]))

    def project(self, point) -> np.ndarray:
        return self.constraint.project(point)

    def projected_gradient_map(self, point, eta: float, lam: float = 1.0) -> np.ndarray:
        """Lazy projected gradient step ``(1-lam) x + lam P_X(x - eta grad f(x))``."""
        point = _as_vector(point, self.dimension)
        target = self.project(point - eta * self.global_gradient(point))
        return (1.0 - lam) * point + lam * target


def centralized_solve(
    problem: ProblemInstance,
    eta: float | None = None,
    tolerance: float = 1e-12,
    x0=None,
    max_iter: int = 10**6,
    return_history: bool = False,
):
    """Minimize the average cost over the constraint set by projected gradient.

    Iterates ``x <- P_X(x - eta grad f(x))`` until the fixed-point residual
    ``||x - P_X(x - eta grad f(x))||`` drops to ``tolerance``.

    Parameters
    ----------
    problem : ProblemInstance
    eta : float, optional
        Step size, must satisfy ``eta < 2 / (mu + L)``. Defaults to
        ``1 / L``, halved when ``mu == L`` to stay inside that range.
    tolerance : float
        Target fixed-point residual.
    x0 : array_like, optional
        Starting point (projected first). Defaults to the projected mean of
        the cost centers.
    max_iter : int
        Iteration cap; hitting it raises :class:`ConvergenceError`.
    return_history : bool
        Also return the list of iterates (starting with the projected ``x0``).

    Returns
    -------
    x : ndarray
        Approximate constrained minimizer.
    """
    mu, lip = problem.mu, problem.lipschitz
    if eta is None:
        eta = 1.0 / lip if mu < lip else 0.5 / lip
    if not 0 < eta < 2.0 / (mu + lip):
        raise ValueError(f"eta must lie in (0, 2/(mu+L)) = (0, {2.0 / (mu + lip)}), got {eta}")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    x = problem.project(problem.centers.mean(axis=0) if x0 is None else _as_vector(x0, problem.dimension))
    history = [x.copy()] if return_history else None
    residual = np.inf
    for _ in range(max_iter):
        x_next = problem.project(x - eta * problem.global_gradient(x))
        residual = float(np.linalg.norm(x_next - x))
        x = x_next
        if history is not None:
            history.append(x.copy())
        if residual <= tolerance:
            return (x, history) if return_history else x
    raise ConvergenceError(
        f"projected gradient did not reach residual {tolerance} in {max_iter} iterations",
        last_iterate=x,
        residual=residual,
    )


def sample_problem(
    n: int,
    d: int = 2,
    seed: int = 0,
    constraint: ConstraintSet | None = None,
    center_range: tuple[float, float] = (-2.0, 8.0),
    curvature_range: tuple[float, float] = (0.0, 1.0),
) -> ProblemInstance:
    """Random instance with diagonal curvatures, as in the disk experiment.

    Centers are uniform on ``center_range`` and diagonal curvature entries
    uniform on ``curvature_range``. The default constraint is the closed disk
    of radius 2 around ``(6, 6, ...)``.
    """
    rng = np.random.default_rng(seed)
    centers = rng.uniform(*center_range, size=(n, d))
    diags = rng.uniform(*curvature_range, size=(n, d))
    # U[0, 1] can in principle return exactly 0; nudge to keep P_i definite.
    diags = np.maximum(diags, np.finfo(float).tiny)
    if constraint is None:
        constraint = Ball(np.full(d, 6.0), 2.0)
    costs = tuple(QuadraticCost(c, np.diag(p)) for c, p in zip(centers, diags))
    return ProblemInstance(costs, constraint)


def sample_initial_points(problem: ProblemInstance, seed: int = 0, low: float = 0.0, high: float = 10.0) -> np.ndarray:
    """Uniform coordinates on ``[low, high]`` projected onto the constraint set."""
    rng = np.random.default_rng(seed)
    raw = rng.uniform(low, high, size=(problem.n_agents, problem.dimension))
    return problem.project(raw)
