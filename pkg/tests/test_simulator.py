import math

import numpy as np
import pytest

from radloc.cones import distance_to_cone
from radloc.errors import MalformedInputError
from radloc.estimator import NoiseConfig
from radloc.geometry import Pose, quat_from_axis_angle, quat_to_matrix, unit
from radloc.simulator import (
    CONE_RATE_CONSTANT,
    DetectorModel,
    Program,
    Scenario,
    metrics,
    run_scenario,
    sample_cones,
    trajectory_waypoints,
)

E3 = np.array([0.0, 0.0, 1.0])


def level_pose(t, position, yaw=0.0):
    return Pose(t, np.asarray(position, dtype=float), quat_from_axis_angle(E3, yaw))


# --- configuration validation ---


def test_detector_model_validation():
    with pytest.raises(MalformedInputError):
        DetectorModel(cone_rate_constant=-1.0)
    with pytest.raises(MalformedInputError):
        DetectorModel(background_rate=-0.1)
    with pytest.raises(MalformedInputError):
        DetectorModel(angular_sigma=-0.01)
    with pytest.raises(MalformedInputError):
        DetectorModel(min_theta=0.0)
    with pytest.raises(MalformedInputError):
        DetectorModel(min_theta=1.5, max_theta=1.0)


def test_scenario_validation():
    with pytest.raises(MalformedInputError):
        Scenario(activity=0.0)
    with pytest.raises(MalformedInputError):
        Scenario(timestep=0.0)
    with pytest.raises(MalformedInputError):
        Scenario(orbit_radius=-1.0)
    with pytest.raises(MalformedInputError):
        Scenario(area=(0.0, 10.0))


def test_source_kinematics_exact():
    sc = Scenario(source_initial=[1.0, 2.0, 0.0], source_velocity=[0.8, -0.6, 0.0])
    assert np.array_equal(sc.source_at(0.0), [1.0, 2.0, 0.0])
    t = 12.5
    assert np.array_equal(sc.source_at(t), sc.source_initial + t * sc.source_velocity)


# --- trajectories ---


def test_trajectory_revolution_time():
    # 10 m radius at 1 m/s: one revolution in 2*pi*10 s
    dt = 0.1
    poses = trajectory_waypoints(np.zeros(3), 10.0, 1.0, dt, 700)
    start = poses[0].position
    gaps = [np.linalg.norm(p.position - start) for p in poses[5:]]
    k = int(np.argmin(gaps)) + 5
    assert poses[k].timestamp == pytest.approx(2.0 * math.pi * 10.0, abs=0.2)


def test_trajectory_constant_chord():
    poses = trajectory_waypoints(np.array([3.0, -2.0, 0.0]), 7.0, 1.3, 0.5, 100, altitude=5.0)
    for a, b in zip(poses, poses[1:]):
        assert np.linalg.norm(b.position - a.position) == pytest.approx(1.3 * 0.5, abs=1e-9)
        assert a.position[2] == 5.0


def test_trajectory_yaw_faces_center():
    center = np.array([1.0, 2.0, 5.0])
    for pose in trajectory_waypoints(center, 10.0, 1.0, 0.5, 40):
        forward = quat_to_matrix(pose.orientation) @ np.array([1.0, 0.0, 0.0])
        to_center = center - pose.position
        to_center[2] = 0.0
        assert unit(forward) @ unit(to_center) == pytest.approx(1.0, abs=1e-9)


def test_trajectory_rejects_bad_radius():
    with pytest.raises(MalformedInputError):
        trajectory_waypoints(np.zeros(3), 0.0, 1.0, 0.5, 10)


# --- detector sampling ---


def test_sample_cones_exact_geometry():
    rng = np.random.default_rng(0)
    model = DetectorModel()  # zero noise, zero background
    source = np.array([5.0, -3.0, 0.0])
    pose = level_pose(0.0, [0.0, 0.0, 5.0])
    seen = 0
    for _ in range(200):
        for cone in sample_cones(source, pose, model, 3.0e9, 0.5, rng):
            assert distance_to_cone(source, cone) < 1e-9
            assert model.min_theta <= cone.half_angle <= model.max_theta
            assert np.array_equal(cone.origin, pose.position)
            seen += 1
    assert seen > 100


def test_sample_cones_moving_source_geometry():
    rng = np.random.default_rng(1)
    model = DetectorModel()
    sc = Scenario(source_initial=[10.0, 2.0, 0.0], source_velocity=[0.8, 0.6, 0.0])
    for k in range(100):
        t = 0.5 * k
        source = sc.source_at(t)
        pose = level_pose(t, [0.0, 0.0, 5.0])
        for cone in sample_cones(source, pose, model, 3.0e9, 0.5, rng):
            assert distance_to_cone(source, cone) < 1e-9


def test_sample_cones_calibrated_rate():
    # 3 GBq at 10 m: 1.7 cones/s on average
    rng = np.random.default_rng(2)
    model = DetectorModel()
    source = np.array([10.0, 0.0, 0.0])
    pose = level_pose(0.0, [0.0, 0.0, 0.0])
    total = sum(len(sample_cones(source, pose, model, 3.0e9, 1.0, rng)) for _ in range(1000))
    assert total / 1000.0 == pytest.approx(1.7, abs=0.2)


def test_sample_cones_inverse_square():
    rng = np.random.default_rng(3)
    model = DetectorModel()
    pose = level_pose(0.0, [0.0, 0.0, 0.0])
    near = sum(
        len(sample_cones(np.array([10.0, 0, 0]), pose, model, 3.0e9, 5.0, rng))
        for _ in range(2000)
    )
    far = sum(
        len(sample_cones(np.array([20.0, 0, 0]), pose, model, 3.0e9, 5.0, rng))
        for _ in range(2000)
    )
    assert near / far == pytest.approx(4.0, abs=0.3)


def test_sample_cones_background_rate_and_noise():
    rng = np.random.default_rng(4)
    model = DetectorModel(angular_sigma=0.05, background_rate=0.5)
    source = np.array([10.0, 0.0, 0.0])
    pose = level_pose(0.0, [0.0, 0.0, 0.0])
    cones = []
    for _ in range(400):
        cones.extend(sample_cones(source, pose, model, 3.0e9, 1.0, rng))
    # noisy cones no longer contain the source exactly, but most come close
    misses = np.array([distance_to_cone(source, c) for c in cones])
    assert np.median(misses) < 1.0
    # background share roughly 0.5 / (1.7 + 0.5)
    assert np.mean(misses > 3.0) == pytest.approx(0.5 / 2.2, abs=0.1)


def test_sample_cones_rejects_coincident_source():
    rng = np.random.default_rng(5)
    pose = level_pose(0.0, [1.0, 1.0, 1.0])
    with pytest.raises(MalformedInputError):
        sample_cones(np.array([1.0, 1.0, 1.0]), pose, DetectorModel(), 3.0e9, 0.5, rng)


# --- closed-loop runs ---


def static_scenario(**overrides):
    base = dict(
        source_initial=[8.0, -4.0, 0.0],
        activity=3.0e9,
        area=(40.0, 20.0),
        uav_speed=2.0,
        orbit_radius=10.0,
        flight_altitude=5.0,
        detector=DetectorModel(),
        duration=30.0,
        seed=7,
        timestep=0.5,
        estimator=NoiseConfig(
            r=2.0, q=0.02, init_variance=25.0, init_multistart=4, init_max_iterations=60
        ),
    )
    base.update(overrides)
    return Scenario(**base)


def report_equal(a, b):
    if len(a.steps) != len(b.steps):
        return False
    for sa, sb in zip(a.steps, b.steps):
        if sa.t != sb.t or sa.phase != sb.phase or sa.status != sb.status:
            return False
        if sa.action != sb.action or not np.array_equal(sa.truth, sb.truth):
            return False
        est_a = sa.estimate if sa.estimate is not None else np.full(3, np.nan)
        est_b = sb.estimate if sb.estimate is not None else np.full(3, np.nan)
        if not np.array_equal(est_a, est_b, equal_nan=True):
            return False
    return (
        a.corrections == b.corrections
        and a.transitions == b.transitions
        and (a.accepted, a.rejected, a.resets, a.degenerate_solves)
        == (b.accepted, b.rejected, b.resets, b.degenerate_solves)
        and (a.cones_source, a.cones_background) == (b.cones_source, b.cones_background)
    )


def test_run_scenario_deterministic():
    sc1 = static_scenario(detector=DetectorModel(angular_sigma=0.05, background_rate=0.1))
    sc2 = static_scenario(detector=DetectorModel(angular_sigma=0.05, background_rate=0.1))
    assert report_equal(run_scenario(sc1), run_scenario(sc2))


def test_run_scenario_noiseless_static_converges_fast():
    report = run_scenario(static_scenario())
    by_count = {count: err for _, count, err, _ in report.corrections}
    assert 15 in by_count
    assert by_count[15] < 1.0


def test_run_scenario_truth_follows_kinematics():
    sc = static_scenario(source_velocity=[0.5, -0.25, 0.0], duration=10.0)
    report = run_scenario(sc)
    for k, step in enumerate(report.steps):
        t = k * sc.timestep
        assert step.t == t
        assert np.array_equal(step.truth, sc.source_at(t))


def test_run_scenario_orbit_only_while_tracking():
    report = run_scenario(
        static_scenario(detector=DetectorModel(angular_sigma=0.05, background_rate=0.1))
    )
    for step in report.steps:
        if step.phase == "orbit":
            assert step.status == "tracking"
    # transitions land exactly on status flips
    flips = []
    prev = "collecting"
    for step in report.steps:
        if step.status != prev:
            flips.append(step.t)
            prev = step.status
    assert [t for t, _ in report.transitions] == flips


def test_run_scenario_stationary_uav_never_tracks():
    sc = Scenario(
        source_initial=[0.0, 0.0, 0.0],
        activity=3.0e9,
        area=(40.0, 40.0),
        uav_speed=0.0,
        flight_altitude=5.0,
        detector=DetectorModel(angular_sigma=0.05),
        duration=20.0,
        seed=3,
        timestep=0.5,
        program=Program.STATIONARY,
        uav_start=[8.0, 0.0, 5.0],
        estimator=NoiseConfig(init_multistart=2, init_max_iterations=40),
    )
    summary = metrics(run_scenario(sc))
    assert summary["degenerate_only"]
    assert summary["tracked_steps"] == 0
    assert summary["time_to_init_s"] is None


def test_run_scenario_radial_approach_never_tracks():
    sc = Scenario(
        source_initial=[0.0, 0.0, 0.0],
        activity=3.0e9,
        area=(40.0, 40.0),
        uav_speed=1.0,
        flight_altitude=0.0,
        detector=DetectorModel(),
        duration=10.0,
        seed=3,
        timestep=0.5,
        program=Program.RADIAL,
        uav_start=[12.0, 0.0, 0.0],
        estimator=NoiseConfig(init_multistart=2, init_max_iterations=40),
    )
    summary = metrics(run_scenario(sc))
    assert summary["degenerate_only"]
    assert summary["tracked_steps"] == 0


def test_run_scenario_background_only_never_initializes():
    # spurious cones have uniform random geometry; the best-fit point of
    # any five of them leaves a residual the consistency gate rejects
    sc = static_scenario(
        detector=DetectorModel(cone_rate_constant=0.0, background_rate=0.1),
        duration=120.0,
        estimator=NoiseConfig(init_multistart=4, init_max_iterations=60),
    )
    report = run_scenario(sc)
    assert report.cones_source == 0
    assert report.cones_background >= 5
    assert report.init_time is None
    # every attempted solve was thrown out one way or the other
    assert report.degenerate_solves + report.inconsistent_solves > 0
    assert metrics(report)["time_to_init_s"] is None


def test_metrics_zero_duration():
    summary = metrics(run_scenario(static_scenario(duration=0.0)))
    assert summary["cones_total"] == 0
    assert summary["accepted"] == 0
    assert summary["cone_rate_per_s"] == 0.0
    assert summary["time_to_init_s"] is None
    assert summary["post_lock_mean_error_m"] is None


def test_metrics_running_mean_error_nonincreasing_noiseless():
    report = run_scenario(static_scenario())
    errs = [err for _, _, err, _ in report.corrections]
    assert errs, "expected accepted corrections"
    means = np.cumsum(errs) / np.arange(1, len(errs) + 1)
    for a, b in zip(means, means[1:]):
        assert b <= a + 1e-9


def test_metrics_keys_and_rates():
    report = run_scenario(static_scenario(duration=15.0))
    summary = metrics(report)
    assert summary["cones_total"] == report.cones_source + report.cones_background
    assert summary["cone_rate_per_s"] == pytest.approx(summary["cones_total"] / 15.0)
    if summary["accepted"] + summary["rejected"] > 0:
        assert 0.0 <= summary["acceptance_rate"] <= 1.0


def test_cone_rate_constant_anchor():
    # 3 GBq at 10 m -> 1.7 cones/s by construction
    assert CONE_RATE_CONSTANT * 3.0e9 / 10.0 ** 2 == pytest.approx(1.7, rel=1e-12)
