"""Source-position Kalman filter with cone-surface projection corrections.

The state is the hypothesized source position with its covariance. The
motion model is identity (stationary target plus process noise); each
measurement is a cone, turned into a pseudo-measurement by projecting
the hypothesis onto the cone surface. The measurement covariance is
anisotropic: informative along the correction direction, effectively
uninformative across it. A session object handles the lifecycle:
collect cones, initialize by constrained least squares, track, and
reset after a run of gated outliers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .cones import ProjectionCase, project_to_cone, surface_normal
from .errors import (
    FilterLifecycleError,
    InfeasibleInitError,
    MalformedInputError,
)
from .geometry import Cone, Frame, rotation_aligning
from .initializer import InitProblem, InitSolution, Mode, default_bounds, solve

log = logging.getLogger(__name__)

_E1 = np.array([1.0, 0.0, 0.0])


class Status(Enum):
    COLLECTING = "collecting"
    TRACKING = "tracking"


class Action(Enum):
    """What ingesting one cone did to the session."""

    BUFFERED = "buffered"
    CORRECTED = "corrected"
    REJECTED = "rejected"
    RESET = "reset"


@dataclass
class NoiseConfig:
    """Filter and initialization tuning knobs.

    r weighs the correction direction, far_variance the two directions
    the cone says nothing about. q is per-prediction process noise that
    lets the stationary-target model follow a slowly moving source.
    """

    r: float = 1.0
    far_variance: float = 1e9
    q: float = 0.01
    outlier_gate: float = 9.0
    init_cone_count: int = 5
    min_origin_separation: float = 0.5
    init_variance: float = 100.0
    reseed_rejected: bool = True
    reset_run_length: int = 3
    init_multistart: int = 8
    init_bounds_margin: float = 200.0
    fallback_factor: int = 3
    degeneracy_threshold: float = 1e6
    init_max_iterations: int = 100
    init_cost_gate: float = 3.0

    def __post_init__(self) -> None:
        if self.r <= 0.0 or self.far_variance <= self.r:
            raise MalformedInputError("need 0 < r < far_variance")
        if self.q < 0.0 or self.outlier_gate <= 0.0:
            raise MalformedInputError("q must be >= 0 and outlier_gate > 0")
        if self.init_cone_count < 3:
            raise MalformedInputError("init_cone_count must be >= 3")
        if self.init_cost_gate <= 0.0:
            raise MalformedInputError("init_cost_gate must be positive")


@dataclass
class FilterState:
    x: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.eye(3))
    mode: Mode = Mode.THREE_D
    consecutive_outliers: int = 0
    status: Status = Status.COLLECTING

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float).reshape(3).copy()
        omega = np.asarray(self.omega, dtype=float).reshape(3, 3).copy()
        if float(np.max(np.abs(omega - omega.T))) > 1e-12:
            raise MalformedInputError("covariance must be symmetric")
        if float(np.min(np.linalg.eigvalsh(omega))) <= 0.0:
            raise MalformedInputError("covariance must be positive definite")
        self.omega = omega
        self.mode = Mode(self.mode)


def predict(state: FilterState, config: NoiseConfig) -> FilterState:
    """Identity-motion prediction: position kept, covariance inflated by q."""
    if state.status is not Status.TRACKING:
        raise FilterLifecycleError("predict requires an initialized (tracking) state")
    return replace(state, x=state.x.copy(), omega=state.omega + config.q * np.eye(3))


def measurement_covariance(x: np.ndarray, x_prime: np.ndarray, config: NoiseConfig) -> np.ndarray:
    """Measurement covariance rotated onto the correction direction.

    Eigenvalue r along unit(x' - x), far_variance across it, realized by
    rotating diag(r, far, far) with the minimal rotation that carries the
    first basis vector onto the correction direction.
    """
    d = np.asarray(x_prime, dtype=float) - np.asarray(x, dtype=float)
    n = float(np.linalg.norm(d))
    if n <= 1e-12:
        raise MalformedInputError("measurement covariance undefined for zero innovation")
    return _rotated_covariance(d / n, config)


def _rotated_covariance(direction: np.ndarray, config: NoiseConfig) -> np.ndarray:
    p = rotation_aligning(_E1, direction)
    r_e = np.diag([config.r, config.far_variance, config.far_variance])
    cov = p @ r_e @ p.T
    return 0.5 * (cov + cov.T)


def _innovation(state: FilterState, cone: Cone) -> tuple[np.ndarray, np.ndarray | None]:
    """Innovation vector and the direction to weigh it along.

    A hypothesis already on the surface still pins down the local surface
    normal; only at the apex or on the axis is there no usable direction.
    """
    res = project_to_cone(state.x, cone)
    nu = res.point - state.x
    n = float(np.linalg.norm(nu))
    if n > 1e-12 * max(1.0, float(np.linalg.norm(state.x))):
        return nu, nu / n
    if res.case is ProjectionCase.SURFACE:
        try:
            return nu, surface_normal(res.point, cone)
        except ValueError:
            return nu, None
    return nu, None


def is_outlier(state: FilterState, cone: Cone, config: NoiseConfig) -> bool:
    """Mahalanobis gate on the innovation under the combined covariance.

    Strict inequality: an innovation exactly at the gate is accepted.
    """
    if state.status is not Status.TRACKING:
        raise FilterLifecycleError("outlier test requires a tracking state")
    nu, direction = _innovation(state, cone)
    if direction is None or float(np.linalg.norm(nu)) == 0.0:
        return False
    cov = state.omega + _rotated_covariance(direction, config)
    d2 = float(nu @ np.linalg.solve(cov, nu))
    return d2 > config.outlier_gate


def correct(state: FilterState, cone: Cone, config: NoiseConfig) -> FilterState:
    """One gated Kalman correction toward the cone surface.

    Accepted measurements (including zero-innovation ones, which update
    only the covariance along the surface normal) reset the outlier run;
    gated ones increment it and leave the state untouched otherwise.
    Ground-plane mode re-pins z to 0 and restores the prior z variance
    so the flattening never fakes confidence in altitude.
    """
    if state.status is not Status.TRACKING:
        raise FilterLifecycleError("correct requires an initialized (tracking) state")
    if cone.frame is not Frame.WORLD:
        raise MalformedInputError("corrections expect world-frame cones")

    nu, direction = _innovation(state, cone)
    if direction is None:
        # apex/axis degeneracy with zero innovation: nothing to update
        return replace(state, x=state.x.copy(), omega=state.omega.copy(), consecutive_outliers=0)

    r_mat = _rotated_covariance(direction, config)
    s_mat = state.omega + r_mat
    d2 = float(nu @ np.linalg.solve(s_mat, nu))
    if d2 > config.outlier_gate:
        return replace(
            state,
            x=state.x.copy(),
            omega=state.omega.copy(),
            consecutive_outliers=state.consecutive_outliers + 1,
        )

    gain = np.linalg.solve(s_mat, state.omega).T  # omega (omega + R)^-1
    x_new = state.x + gain @ nu
    ik = np.eye(3) - gain
    omega_new = ik @ state.omega @ ik.T + gain @ r_mat @ gain.T
    omega_new = 0.5 * (omega_new + omega_new.T)

    if state.mode is Mode.TWO_D:
        prior_zz = state.omega[2, 2]
        x_new[2] = 0.0
        omega_new[2, :] = 0.0
        omega_new[:, 2] = 0.0
        omega_new[2, 2] = prior_zz

    return FilterState(x_new, omega_new, state.mode, 0, Status.TRACKING)


class SourceEstimator:
    """One estimation session: buffer, initialize, track, reset.

    Feed world-frame cones in timestamp order through ingest(); the
    session reports what it did with each one. Initialization waits for
    init_cone_count cones whose origins are pairwise separated; if the
    platform never moves enough, a fallback solve on the most recent
    cones runs anyway so degenerate geometry gets reported instead of
    stalling silently.
    """

    def __init__(self, config: NoiseConfig | None = None, mode: Mode = Mode.THREE_D):
        self.config = config if config is not None else NoiseConfig()
        self.mode = Mode(mode)
        self.state = FilterState(mode=self.mode)
        self.buffer: list[Cone] = []
        self._rejected_run: list[Cone] = []
        self.last_solution: InitSolution | None = None
        self.degenerate_solves = 0
        self.inconsistent_solves = 0
        self.resets = 0
        self.accepted = 0
        self.rejected = 0
        self.init_time: float | None = None

    def ingest(self, cone: Cone) -> tuple[FilterState, Action]:
        if cone.frame is not Frame.WORLD:
            raise MalformedInputError("ingest expects world-frame cones")
        if self.state.status is Status.COLLECTING:
            self.buffer.append(cone)
            trigger = self._separated_subset()
            if trigger is None and len(self.buffer) >= self.config.fallback_factor * self.config.init_cone_count:
                # stuck buffer: solve on the freshest cones so degenerate
                # geometry (hovering, radial approach) surfaces in the report
                trigger = self.buffer[-self.config.init_cone_count :]
            if trigger is not None:
                self._try_initialize(trigger, cone.timestamp)
            return self.state, Action.BUFFERED

        self.state = predict(self.state, self.config)
        before = self.state.consecutive_outliers
        self.state = correct(self.state, cone, self.config)
        if self.state.consecutive_outliers > before:
            self.rejected += 1
            self._rejected_run.append(cone)
            if self.state.consecutive_outliers > self.config.reset_run_length:
                return self._reset()
            return self.state, Action.REJECTED
        self.accepted += 1
        self._rejected_run.clear()
        return self.state, Action.CORRECTED

    def _reset(self) -> tuple[FilterState, Action]:
        self.resets += 1
        seed = list(self._rejected_run[-(self.config.reset_run_length + 1) :])
        self._rejected_run.clear()
        self.buffer = seed if self.config.reseed_rejected else []
        self.state = FilterState(mode=self.mode)
        log.info("hypothesis reset; reseeding buffer with %d cones", len(self.buffer))
        return self.state, Action.RESET

    def _separated_subset(self) -> list[Cone] | None:
        """Earliest arrival-order subset with pairwise separated origins."""
        kept: list[Cone] = []
        min_sep = self.config.min_origin_separation
        for cone in self.buffer:
            if all(float(np.linalg.norm(cone.origin - k.origin)) > min_sep for k in kept):
                kept.append(cone)
                if len(kept) == self.config.init_cone_count:
                    return kept
        return None

    def _try_initialize(self, cones: list[Cone], timestamp: float) -> bool:
        problem = InitProblem(
            list(cones),
            mode=self.mode,
            bounds=default_bounds(cones, self.config.init_bounds_margin),
            multistart_count=self.config.init_multistart,
            degeneracy_threshold=self.config.degeneracy_threshold,
            max_iterations=self.config.init_max_iterations,
        )
        try:
            solution = solve(problem)
        except InfeasibleInitError:
            self.degenerate_solves += 1
            log.debug("initialization infeasible at t=%.3f", timestamp)
            return False
        self.last_solution = solution
        if solution.degenerate:
            self.degenerate_solves += 1
            log.debug(
                "degenerate initialization (condition %.3g) at t=%.3f",
                solution.condition,
                timestamp,
            )
            return False
        # consistency gate: geometrically lucky but mutually inconsistent
        # cones (pure background) leave a large best-fit residual
        if solution.cost > self.config.init_cost_gate * len(cones) * self.config.r:
            self.inconsistent_solves += 1
            log.debug(
                "inconsistent initialization (cost %.3g) at t=%.3f", solution.cost, timestamp
            )
            return False
        self.state = FilterState(
            solution.p,
            self.config.init_variance * np.eye(3),
            self.mode,
            0,
            Status.TRACKING,
        )
        self.buffer = []
        self.init_time = timestamp
        log.info("initialized at t=%.3f, p=%s", timestamp, np.round(solution.p, 3))
        return True


__all__ = [
    "Action",
    "FilterState",
    "NoiseConfig",
    "SourceEstimator",
    "Status",
    "correct",
    "is_outlier",
    "measurement_covariance",
    "predict",
]
