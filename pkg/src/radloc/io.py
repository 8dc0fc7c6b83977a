"""File formats: CSV streams, scenario YAML, atomic output writing.

All CSV files carry a mandatory header line. Readers raise ParseError
with the offending line number, SchemaError for wrong headers or config
keys, and OrderingError when a time-ordered stream runs backwards.
Writers go through an atomic temp-file rename so interrupted runs never
leave truncated output behind.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import yaml

from .errors import OrderingError, ParseError, SchemaError
from .estimator import NoiseConfig
from .events import ComptonPair, PixelHit
from .geometry import Cone, Frame, Pose
from .initializer import Mode
from .simulator import DetectorModel, Program, Scenario, SimulationReport

HITS_HEADER = ["toa_ns", "col", "row", "energy_kev"]
PAIRS_HEADER = [
    "electron_x_mm",
    "electron_y_mm",
    "electron_kev",
    "electron_toa_ns",
    "photon_x_mm",
    "photon_y_mm",
    "photon_kev",
    "photon_toa_ns",
]
POSES_HEADER = ["t_s", "px", "py", "pz", "qw", "qx", "qy", "qz"]
CONES_HEADER = ["t_s", "ox", "oy", "oz", "dx", "dy", "dz", "theta_rad", "frame"]
ESTIMATES_HEADER = [
    "t_s",
    "x",
    "y",
    "z",
    "cov_xx",
    "cov_xy",
    "cov_xz",
    "cov_yy",
    "cov_yz",
    "cov_zz",
    "status",
    "action",
]
STEPS_HEADER = [
    "t_s",
    "truth_x",
    "truth_y",
    "truth_z",
    "est_x",
    "est_y",
    "est_z",
    "err_m",
    "phase",
    "action",
]
TRUTH_HEADER = ["t_s", "x", "y", "z"]


def _fmt(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return format(float(value), ".12g")


def atomic_write(path: str | Path, text: str) -> None:
    """Write text to path via a same-directory temp file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _read_rows(path: str | Path, header: list[str]) -> list[tuple[int, list[str]]]:
    """CSV rows with their 1-based line numbers, header validated."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    if not lines:
        raise SchemaError(f"{path}: empty file, expected header {','.join(header)}", keys=header)
    got = [c.strip() for c in lines[0].split(",")]
    if got != header:
        raise SchemaError(
            f"{path}: bad header; expected {','.join(header)}",
            keys=sorted(set(header).symmetric_difference(got)),
        )
    rows: list[tuple[int, list[str]]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = next(csv.reader([line]))
        if len(cells) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(cells)}", path=str(path), line=lineno
            )
        rows.append((lineno, cells))
    return rows


def _floats(cells: list[str], path: str, lineno: int) -> list[float]:
    out = []
    for cell in cells:
        try:
            out.append(float(cell))
        except ValueError as exc:
            raise ParseError(f"not a number: {cell!r}", path=path, line=lineno) from exc
    return out


def sniff_events_format(path: str | Path) -> str:
    """'hits' or 'pairs', decided by the header line."""
    path = Path(path)
    try:
        with open(path) as fh:
            header = [c.strip() for c in fh.readline().split(",")]
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    if header == HITS_HEADER:
        return "hits"
    if header == PAIRS_HEADER:
        return "pairs"
    raise SchemaError(
        f"{path}: header matches neither hit nor pair schema",
        keys=sorted(set(header)),
    )


def read_hits_csv(path: str | Path, sensor_pixels: int = 256) -> list[PixelHit]:
    hits = []
    for lineno, cells in _read_rows(path, HITS_HEADER):
        toa, col, row, energy = _floats(cells, str(path), lineno)
        if not (0 <= col < sensor_pixels and 0 <= row < sensor_pixels):
            raise ParseError(
                f"pixel ({col:g}, {row:g}) outside {sensor_pixels}x{sensor_pixels} matrix",
                path=str(path),
                line=lineno,
            )
        if energy <= 0:
            raise ParseError("energy must be positive", path=str(path), line=lineno)
        hits.append(PixelHit(toa, int(col), int(row), energy))
    return hits


def read_pairs_csv(path: str | Path) -> list[ComptonPair]:
    pairs = []
    for lineno, cells in _read_rows(path, PAIRS_HEADER):
        ex, ey, ee, et, px, py, pe, pt = _floats(cells, str(path), lineno)
        if ee <= 0 or pe <= 0:
            raise ParseError("pair energies must be positive", path=str(path), line=lineno)
        pairs.append(ComptonPair((ex, ey), (px, py), ee, pe, et, pt))
    return pairs


def read_poses_csv(path: str | Path) -> list[Pose]:
    poses = []
    last_t = None
    for lineno, cells in _read_rows(path, POSES_HEADER):
        t, px, py, pz, qw, qx, qy, qz = _floats(cells, str(path), lineno)
        if last_t is not None and t <= last_t:
            raise OrderingError(f"{path}:{lineno}: pose timestamps must strictly increase")
        last_t = t
        quat = np.array([qw, qx, qy, qz])
        norm = float(np.linalg.norm(quat))
        if abs(norm - 1.0) > 1e-6:
            raise ParseError(f"quaternion norm {norm:.6g} != 1", path=str(path), line=lineno)
        poses.append(Pose(t, np.array([px, py, pz]), quat))
    return poses


def read_cones_csv(path: str | Path) -> list[Cone]:
    cones = []
    last_t = None
    for lineno, cells in _read_rows(path, CONES_HEADER):
        values = _floats(cells[:8], str(path), lineno)
        frame = cells[8].strip()
        if frame not in ("C", "W"):
            raise ParseError(f"frame must be C or W, got {frame!r}", path=str(path), line=lineno)
        t, ox, oy, oz, dx, dy, dz, theta = values
        if last_t is not None and t < last_t:
            raise OrderingError(f"{path}:{lineno}: cone timestamps must be nondecreasing")
        last_t = t
        axis = np.array([dx, dy, dz])
        norm = float(np.linalg.norm(axis))
        if norm < 1e-12:
            raise ParseError("zero cone axis", path=str(path), line=lineno)
        cones.append(Cone(np.array([ox, oy, oz]), axis / norm, theta, Frame(frame), t))
    return cones


def write_cones_csv(path: str | Path, cones: list[Cone]) -> None:
    buf = _io.StringIO()
    buf.write(",".join(CONES_HEADER) + "\n")
    for c in cones:
        cells = [
            _fmt(c.timestamp),
            *(_fmt(v) for v in c.origin),
            *(_fmt(v) for v in c.axis),
            _fmt(c.half_angle),
            c.frame.value,
        ]
        buf.write(",".join(cells) + "\n")
    atomic_write(path, buf.getvalue())


def write_estimates_csv(path: str | Path, rows: list[dict]) -> None:
    buf = _io.StringIO()
    buf.write(",".join(ESTIMATES_HEADER) + "\n")
    for row in rows:
        cells = [_fmt(row[k]) for k in ESTIMATES_HEADER[:10]]
        cells.append(str(row["status"]))
        cells.append(str(row["action"]))
        buf.write(",".join(cells) + "\n")
    atomic_write(path, buf.getvalue())


def read_estimates_csv(path: str | Path) -> list[dict]:
    out = []
    for lineno, cells in _read_rows(path, ESTIMATES_HEADER):
        values = _floats(cells[:10], str(path), lineno)
        row = dict(zip(ESTIMATES_HEADER[:10], values))
        row["status"] = cells[10].strip()
        row["action"] = cells[11].strip()
        out.append(row)
    return out


def write_steps_csv(path: str | Path, report: SimulationReport) -> None:
    buf = _io.StringIO()
    buf.write(",".join(STEPS_HEADER) + "\n")
    for s in report.steps:
        est = s.estimate if s.estimate is not None else [float("nan")] * 3
        cells = [
            _fmt(s.t),
            *(_fmt(v) for v in s.truth),
            *(_fmt(v) for v in est),
            _fmt(s.error),
            s.phase,
            s.action,
        ]
        buf.write(",".join(cells) + "\n")
    atomic_write(path, buf.getvalue())


def read_truth_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth positions over time: accepts the plain t,x,y,z schema
    or a simulator step log (truth columns extracted)."""
    path = Path(path)
    with open(path) as fh:
        header = [c.strip() for c in fh.readline().split(",")]
    if header == TRUTH_HEADER:
        rows = _read_rows(path, TRUTH_HEADER)
        data = np.array([_floats(cells, str(path), n) for n, cells in rows])
    elif header == STEPS_HEADER:
        rows = _read_rows(path, STEPS_HEADER)
        data = np.array(
            [_floats(cells[:4], str(path), n) for n, cells in rows]
        )
    else:
        raise SchemaError(f"{path}: not a truth or step file", keys=sorted(set(header)))
    if data.size == 0:
        raise SchemaError(f"{path}: no truth samples", keys=[])
    t = data[:, 0]
    if np.any(np.diff(t) < 0):
        raise OrderingError(f"{path}: truth timestamps must be nondecreasing")
    return t, data[:, 1:4]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Enum):
        return obj.value
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def write_json(path: str | Path, obj) -> None:
    atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# --- scenario config ---

_TOP_KEYS = {"source", "area", "uav", "detector", "estimator", "duration", "timestep", "seed"}
_SOURCE_KEYS = {"position", "velocity", "activity_bq"}
_UAV_KEYS = {"speed", "orbit_radius", "altitude", "program", "start"}
_DETECTOR_KEYS = {
    "cone_rate_constant",
    "angular_sigma",
    "axis_sigma",
    "background_rate",
    "min_theta",
    "max_theta",
}
_ESTIMATOR_KEYS = {
    "mode",
    "r",
    "q",
    "far_variance",
    "gate",
    "init_count",
    "min_origin_separation",
    "init_variance",
    "reseed_rejected",
    "reset_run_length",
    "multistart",
    "bounds_margin",
    "fallback_factor",
    "degeneracy_threshold",
    "max_iterations",
    "cost_gate",
}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise SchemaError(f"unknown {where} keys: {', '.join(unknown)}", keys=unknown)


def _vec3(value, where: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float).reshape(3)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where} must be a 3-vector", keys=[where]) from exc
    return arr


def load_scenario(path: str | Path) -> Scenario:
    """Parse and validate a scenario config file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}", path=str(path)) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: top level must be a mapping", keys=[])
    return scenario_from_dict(raw)


def scenario_from_dict(raw: dict) -> Scenario:
    _check_keys(raw, _TOP_KEYS, "scenario")
    source = raw.get("source", {}) or {}
    uav = raw.get("uav", {}) or {}
    detector_cfg = raw.get("detector", {}) or {}
    estimator_cfg = raw.get("estimator", {}) or {}
    for section, allowed, name in (
        (source, _SOURCE_KEYS, "source"),
        (uav, _UAV_KEYS, "uav"),
        (detector_cfg, _DETECTOR_KEYS, "detector"),
        (estimator_cfg, _ESTIMATOR_KEYS, "estimator"),
    ):
        if not isinstance(section, dict):
            raise SchemaError(f"{name} must be a mapping", keys=[name])
        _check_keys(section, allowed, name)

    try:
        detector = DetectorModel(
            cone_rate_constant=float(detector_cfg.get("cone_rate_constant", DetectorModel.cone_rate_constant)),
            angular_sigma=float(detector_cfg.get("angular_sigma", 0.0)),
            axis_sigma=float(detector_cfg.get("axis_sigma", 0.0)),
            background_rate=float(detector_cfg.get("background_rate", 0.0)),
            min_theta=float(detector_cfg.get("min_theta", 0.2)),
            max_theta=float(detector_cfg.get("max_theta", 1.4)),
        )
        noise = NoiseConfig(
            r=float(estimator_cfg.get("r", 1.0)),
            far_variance=float(estimator_cfg.get("far_variance", 1e9)),
            q=float(estimator_cfg.get("q", 0.01)),
            outlier_gate=float(estimator_cfg.get("gate", 9.0)),
            init_cone_count=int(estimator_cfg.get("init_count", 5)),
            min_origin_separation=float(estimator_cfg.get("min_origin_separation", 0.5)),
            init_variance=float(estimator_cfg.get("init_variance", 100.0)),
            reseed_rejected=bool(estimator_cfg.get("reseed_rejected", True)),
            reset_run_length=int(estimator_cfg.get("reset_run_length", 3)),
            init_multistart=int(estimator_cfg.get("multistart", 8)),
            init_bounds_margin=float(estimator_cfg.get("bounds_margin", 200.0)),
            fallback_factor=int(estimator_cfg.get("fallback_factor", 3)),
            degeneracy_threshold=float(estimator_cfg.get("degeneracy_threshold", 1e6)),
            init_max_iterations=int(estimator_cfg.get("max_iterations", 100)),
            init_cost_gate=float(estimator_cfg.get("cost_gate", 3.0)),
        )
        area_raw = raw.get("area", [100.0, 100.0])
        if not isinstance(area_raw, (list, tuple)) or len(area_raw) != 2:
            raise SchemaError("area must be [width, height]", keys=["area"])
        start = uav.get("start")
        scenario = Scenario(
            source_initial=_vec3(source.get("position", [0.0, 0.0, 0.0]), "source.position"),
            source_velocity=_vec3(source.get("velocity", [0.0, 0.0, 0.0]), "source.velocity"),
            activity=float(source.get("activity_bq", 3.0e9)),
            area=(float(area_raw[0]), float(area_raw[1])),
            uav_speed=float(uav.get("speed", 1.0)),
            orbit_radius=float(uav.get("orbit_radius", 10.0)),
            flight_altitude=float(uav.get("altitude", 5.0)),
            detector=detector,
            duration=float(raw.get("duration", 120.0)),
            seed=int(raw.get("seed", 0)),
            timestep=float(raw.get("timestep", 0.5)),
            program=_program(uav.get("program", "search")),
            uav_start=_vec3(start, "uav.start") if start is not None else None,
            mode=Mode(str(estimator_cfg.get("mode", "3d"))),
            estimator=noise,
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid scenario value: {exc}", keys=[]) from exc
    return scenario


def _program(value) -> Program:
    try:
        return Program(str(value))
    except ValueError as exc:
        raise SchemaError(f"unknown program {value!r}", keys=["uav.program"]) from exc


__all__ = [
    "CONES_HEADER",
    "ESTIMATES_HEADER",
    "HITS_HEADER",
    "PAIRS_HEADER",
    "POSES_HEADER",
    "STEPS_HEADER",
    "TRUTH_HEADER",
    "atomic_write",
    "load_scenario",
    "read_cones_csv",
    "read_estimates_csv",
    "read_hits_csv",
    "read_pairs_csv",
    "read_poses_csv",
    "read_truth_csv",
    "scenario_from_dict",
    "sniff_events_format",
    "write_cones_csv",
    "write_estimates_csv",
    "write_json",
    "write_steps_csv",
]
