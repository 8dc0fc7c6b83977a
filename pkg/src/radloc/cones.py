"""Point-to-cone distance and orthogonal projection onto a cone surface.

A cone here is always the single nap emanating from its apex. These two
operations are the measurement model for everything downstream: the
initializer minimizes squared distances, the tracking filter corrects
toward the projected point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Cone, perpendicular_unit, unit


class ProjectionCase(Enum):
    """Which branch produced the projected point."""

    SURFACE = "surface"
    APEX = "apex"
    ON_AXIS = "on_axis"


@dataclass(frozen=True)
class ProjectionResult:
    """Projected point with the diagnostic angles of the construction.

    alpha is the angle between the apex-to-point offset and the cone
    axis; beta = alpha - half_angle is the rotation that carries the
    point onto the surface.
    """

    point: np.ndarray
    case: ProjectionCase
    alpha: float
    beta: float
    distance: float


def _split(point: np.ndarray, cone: Cone) -> tuple[np.ndarray, float, float]:
    """Offset from apex, its length, and the axial coordinate."""
    u = np.asarray(point, dtype=float) - cone.origin
    ell = float(np.linalg.norm(u))
    axial = float(np.dot(cone.axis, u))
    return u, ell, axial


def distance_to_cone(point: np.ndarray, cone: Cone) -> float:
    """Shortest distance from a point to the cone, as used by the solver.

    Points behind the apex plane (axis . (p - o) < 0) are charged the full
    distance to the apex; elsewhere the perpendicular drop onto the
    surface, |p - o| * |sin(alpha - half_angle)|.
    """
    u, ell, axial = _split(point, cone)
    if ell < 1e-15:
        return 0.0
    if axial < 0.0:
        return ell
    alpha = math.atan2(float(np.linalg.norm(np.cross(cone.axis, u))), axial)
    return ell * abs(math.sin(alpha - cone.half_angle))


def signed_deviation(point: np.ndarray, cone: Cone) -> float:
    """Signed surface offset: positive outside the cone, negative inside.

    Behind the apex plane every point counts as outside, at apex distance.
    """
    u, ell, axial = _split(point, cone)
    if ell < 1e-15:
        return 0.0
    if axial < 0.0:
        return ell
    alpha = math.atan2(float(np.linalg.norm(np.cross(cone.axis, u))), axial)
    return ell * math.sin(alpha - cone.half_angle)


def project_to_cone(x: np.ndarray, cone: Cone) -> ProjectionResult:
    """Orthogonally project a point onto the cone surface.

    Surface case (alpha < pi/2): x' = o + |x - o| * cos(beta) * v, with v
    the unit surface generator in the plane spanned by the axis and the
    point. Points at alpha >= pi/2 map to the apex. On the axis the
    azimuth is undetermined; a fixed perpendicular (world x-axis
    projected off the axis) makes the result deterministic, tagged
    ON_AXIS. A cone opened past a right angle can put the generator foot
    behind the apex (cos(beta) <= 0); the apex is then nearest.
    """
    x = np.asarray(x, dtype=float)
    u, ell, axial = _split(x, cone)
    if ell < 1e-15:
        # apex is itself a surface point; azimuth meaningless
        return ProjectionResult(cone.origin.copy(), ProjectionCase.ON_AXIS, 0.0, -cone.half_angle, 0.0)

    perp = u - axial * cone.axis
    perp_norm = float(np.linalg.norm(perp))
    alpha = math.atan2(perp_norm, axial)
    beta = alpha - cone.half_angle

    if alpha >= 0.5 * math.pi:
        return ProjectionResult(cone.origin.copy(), ProjectionCase.APEX, alpha, beta, ell)

    case = ProjectionCase.SURFACE
    if perp_norm < 1e-12 * ell:
        w = perpendicular_unit(cone.axis)
        case = ProjectionCase.ON_AXIS
    else:
        w = perp / perp_norm

    along = ell * math.cos(beta)
    if along <= 0.0:
        return ProjectionResult(cone.origin.copy(), ProjectionCase.APEX, alpha, beta, ell)

    v = math.cos(cone.half_angle) * cone.axis + math.sin(cone.half_angle) * w
    xp = cone.origin + along * v
    return ProjectionResult(xp, case, alpha, beta, float(np.linalg.norm(x - xp)))


def surface_normal(point: np.ndarray, cone: Cone) -> np.ndarray:
    """Outward unit normal of the cone surface at a point on (or near) it.

    Defined wherever the point has a resolvable azimuth about the axis.
    Used by the filter when a zero-length innovation still carries
    directional information.
    """
    u, ell, axial = _split(point, cone)
    if ell < 1e-15:
        raise ValueError("normal undefined at the apex")
    perp = u - axial * cone.axis
    perp_norm = float(np.linalg.norm(perp))
    if perp_norm < 1e-12 * ell:
        raise ValueError("normal undefined on the axis")
    w = perp / perp_norm
    return math.cos(cone.half_angle) * w - math.sin(cone.half_angle) * cone.axis


def surface_point(cone: Cone, range_: float, azimuth: float) -> np.ndarray:
    """Point on the cone at the given distance from the apex.

    Azimuth is measured about the axis from the deterministic reference
    perpendicular. Mostly a test and plotting helper.
    """
    if range_ < 0.0:
        raise ValueError("range must be nonnegative")
    w0 = perpendicular_unit(cone.axis)
    w1 = np.cross(cone.axis, w0)
    w = math.cos(azimuth) * w0 + math.sin(azimuth) * w1
    v = math.cos(cone.half_angle) * cone.axis + math.sin(cone.half_angle) * w
    return cone.origin + range_ * unit(v)


__all__ = [
    "ProjectionCase",
    "ProjectionResult",
    "distance_to_cone",
    "project_to_cone",
    "signed_deviation",
    "surface_normal",
    "surface_point",
]
