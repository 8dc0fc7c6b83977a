"""Constrained least-squares initializer for the source position.

Finds the point minimizing the summed squared distances to a batch of
measurement cones, subject to the half-space constraints that keep the
point on the open side of every apex, optionally restricted to the
ground plane. Gradients are analytic; degeneracy (direction-only
geometry) is detected from the conditioning of the Gauss-Newton normal
matrix at the solution.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize, nnls

from .cones import distance_to_cone
from .errors import InfeasibleInitError, MalformedInputError
from .geometry import Cone, perpendicular_unit

log = logging.getLogger(__name__)

# deterministic multistart draws; bounds-relative so translated problems
# get translated starts
_START_SEED = 173


class Mode(Enum):
    """Estimation space: free 3D position or ground-plane (z = 0) only."""

    THREE_D = "3d"
    TWO_D = "2d"


@dataclass
class InitProblem:
    cones: list[Cone]
    mode: Mode = Mode.THREE_D
    bounds: tuple[np.ndarray, np.ndarray] | None = None  # (lo, hi), meters
    multistart_count: int = 8
    tolerance: float = 1e-6
    degeneracy_threshold: float = 1e6
    max_iterations: int = 100

    def __post_init__(self) -> None:
        if len(self.cones) < 3:
            raise MalformedInputError("initialization needs at least 3 cones")
        if self.multistart_count < 1:
            raise MalformedInputError("multistart_count must be >= 1")
        self.mode = Mode(self.mode)
        if self.bounds is None:
            self.bounds = default_bounds(self.cones)
        lo, hi = self.bounds
        lo = np.asarray(lo, dtype=float).reshape(3)
        hi = np.asarray(hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise MalformedInputError("bounds box is empty")
        self.bounds = (lo, hi)


@dataclass
class InitSolution:
    p: np.ndarray
    cost: float
    condition: float
    degenerate: bool
    iterations: int


def default_bounds(cones: list[Cone], margin: float = 200.0) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned box around all apices, inflated by the search margin."""
    apices = np.array([c.origin for c in cones])
    return apices.min(axis=0) - margin, apices.max(axis=0) + margin


def residuals(p: np.ndarray, cones: list[Cone]) -> np.ndarray:
    """Per-cone surface distances at p."""
    p = np.asarray(p, dtype=float)
    return np.array([distance_to_cone(p, c) for c in cones])


def _distance_gradient(p: np.ndarray, cone: Cone, eps: float = 1e-9) -> np.ndarray:
    """Gradient of the single-cone distance, with nonsmooth points nudged.

    The distance function has kinks at the apex, on the axis, and on the
    branch boundary between the behind-apex and surface expressions; a
    deterministic eps offset picks one one-sided derivative there.
    """
    p = np.asarray(p, dtype=float)
    u = p - cone.origin
    ell = float(np.linalg.norm(u))
    if ell < 1e-12:
        u = u + eps * perpendicular_unit(cone.axis)
        ell = float(np.linalg.norm(u))
    axial = float(np.dot(cone.axis, u))
    if abs(axial) < 1e-12 * max(ell, 1.0):
        u = u + eps * cone.axis
        ell = float(np.linalg.norm(u))
        axial = float(np.dot(cone.axis, u))
    if axial < 0.0:
        return u / ell
    perp = u - axial * cone.axis
    perp_norm = float(np.linalg.norm(perp))
    if perp_norm < 1e-12 * ell:
        u = u + eps * perpendicular_unit(cone.axis)
        ell = float(np.linalg.norm(u))
        axial = float(np.dot(cone.axis, u))
        perp = u - axial * cone.axis
        perp_norm = float(np.linalg.norm(perp))
    uhat = u / ell
    alpha = math.atan2(perp_norm, axial)
    beta = alpha - cone.half_angle
    sign = 1.0 if math.sin(beta) >= 0.0 else -1.0
    # d(ell)/dp = uhat, d(alpha)/dp = -(axis - cos(alpha) uhat)/(ell sin(alpha))
    return sign * (
        math.sin(beta) * uhat
        - math.cos(beta) * (cone.axis - math.cos(alpha) * uhat) / math.sin(alpha)
    )


def jacobian(p: np.ndarray, cones: list[Cone]) -> np.ndarray:
    """N x 3 matrix of per-cone distance gradients at p."""
    return np.array([_distance_gradient(p, c) for c in cones])


def cost_and_gradient(p: np.ndarray, cones: list[Cone]) -> tuple[float, np.ndarray]:
    """Summed squared distance and its analytic gradient."""
    r = residuals(p, cones)
    jac = jacobian(p, cones)
    return float(r @ r), 2.0 * jac.T @ r


def _constraint_system(cones: list[Cone]) -> tuple[np.ndarray, np.ndarray]:
    """Half-space constraints axis . (p - origin) >= 0 as A p >= b."""
    a = np.array([c.axis for c in cones])
    b = np.array([float(np.dot(c.axis, c.origin)) for c in cones])
    return a, b


def stationarity_residual(p: np.ndarray, problem: InitProblem) -> float:
    """Norm of the cost gradient projected onto the feasible directions.

    First-order optimality measure: the gradient minus its best
    representation by nonnegative multipliers on the active constraints.
    """
    p = np.asarray(p, dtype=float)
    free = slice(0, 2) if problem.mode is Mode.TWO_D else slice(0, 3)
    _, g = cost_and_gradient(p, problem.cones)
    a, b = _constraint_system(problem.cones)
    active = (a @ p - b) < 1e-6
    g_free = g[free]
    if not np.any(active):
        return float(np.linalg.norm(g_free))
    coeffs, resid = nnls(a[active][:, free].T, g_free)
    del coeffs
    return float(resid)


def solve(problem: InitProblem) -> InitSolution:
    """Best feasible local minimizer over deterministic multistarts.

    Starts are the apex centroid plus the lowest-cost entries of a
    deterministic uniform sample of the bounds box, so wide boxes still
    seed the global basin; ties between equal-cost starts resolve to
    the earliest start. The ground-plane mode eliminates z instead of
    constraining it. Raises when no start produces a feasible point; a
    degenerate (direction-only) solution is reported, not raised.
    """
    cones = problem.cones
    lo, hi = problem.bounds
    two_d = problem.mode is Mode.TWO_D
    dims = 2 if two_d else 3

    def lift(v: np.ndarray) -> np.ndarray:
        return np.array([v[0], v[1], 0.0]) if two_d else np.asarray(v, dtype=float)

    a_full, b_vec = _constraint_system(cones)
    a_free = a_full[:, :dims]

    def fun(v: np.ndarray) -> tuple[float, np.ndarray]:
        cost, grad = cost_and_gradient(lift(v), cones)
        return cost, grad[:dims]

    centroid = np.mean([c.origin for c in cones], axis=0)
    rng = np.random.default_rng(_START_SEED)
    pool = lo + rng.random((32 * problem.multistart_count, 3)) * (hi - lo)
    pool_cost = np.array([float(np.sum(residuals(lift(v[:dims]), cones) ** 2)) for v in pool])
    order = np.argsort(pool_cost, kind="stable")
    starts = [np.clip(centroid, lo, hi)[:dims]]
    starts.extend(pool[i][:dims] for i in order[: problem.multistart_count - 1])

    box = list(zip(lo[:dims], hi[:dims]))
    constraints = {
        "type": "ineq",
        "fun": lambda v: a_full @ lift(v) - b_vec,
        "jac": lambda v: a_free,
    }

    best = None
    for idx, x0 in enumerate(starts):
        with warnings.catch_warnings():
            # SLSQP probes outside the box and clips; routine, not an error
            warnings.filterwarnings(
                "ignore", message="Values in x were outside bounds", category=RuntimeWarning
            )
            res = minimize(
                fun,
                x0,
                jac=True,
                method="SLSQP",
                bounds=box,
                constraints=[constraints],
                options={"maxiter": problem.max_iterations, "ftol": problem.tolerance ** 2},
            )
        feasible = float(np.min(a_full @ lift(res.x) - b_vec)) >= -1e-6
        if not feasible or not np.all(np.isfinite(res.x)):
            log.debug("start %d infeasible or diverged", idx)
            continue
        cost = float(fun(res.x)[0])
        if best is None or cost < best[0]:
            best = (cost, idx, res.x.copy(), int(res.nit))

    if best is None:
        raise InfeasibleInitError("no multistart produced a feasible point")

    cost, _, x_best, iterations = best
    p = lift(x_best)
    # Conditioning is judged only from cones whose distance is smooth at p;
    # a cone whose apex coincides with p has no gradient there and cannot
    # pin the solution down.  No smooth cone left means the point is fully
    # unconstrained to first order.
    smooth = [c for c in cones if np.linalg.norm(p - c.origin) >= 1e-9]
    if smooth:
        jac_free = jacobian(p, smooth)[:, :dims]
        normal = jac_free.T @ jac_free
        condition = float(np.linalg.cond(normal))
    else:
        condition = float("inf")
    degenerate = (not np.isfinite(condition)) or condition > problem.degeneracy_threshold
    return InitSolution(p, cost, condition, degenerate, iterations)


__all__ = [
    "InitProblem",
    "InitSolution",
    "Mode",
    "cost_and_gradient",
    "default_bounds",
    "jacobian",
    "residuals",
    "solve",
    "stationarity_residual",
]
