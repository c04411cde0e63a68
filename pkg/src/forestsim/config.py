"""Run configuration: JSON document -> validated objects.

Parse errors carry the offending field path so the CLI can print a usable
diagnostic and exit with the config-error code.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import (LIGHTING_PRESETS, SPECIES_COUNT, CameraIntrinsics, Lighting,
                   PointLight, Pose, SceneConfig, Terrain, TerrainParams)
from .math3d import look_at_quat, quat_normalize
from .procgen import sample_height
from .sensors import Trajectory


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


@dataclass(frozen=True)
class KeyframeSpec:
    t: float
    position: tuple[float, float, float]
    look_at: tuple[float, float, float] | None = None
    orientation_wxyz: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class TrajectorySpec:
    name: str
    frame_rate_hz: float
    keyframes: tuple[KeyframeSpec, ...]
    z_mode: str = "absolute"  # or "terrain_relative"


@dataclass(frozen=True)
class RunConfig:
    scene: SceneConfig
    intrinsics: CameraIntrinsics
    trajectories: tuple[TrajectorySpec, ...]
    lidar: dict = field(default_factory=dict)
    test_fraction: float = 0.1
    split_seed: int = 0
    min_area_px: int = 16
    radial_segments: int = 12
    raw: dict = field(default_factory=dict, compare=False)

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest()


def _get(obj: dict, key: str, path: str, expected=None, default=..., ):
    if key not in obj:
        if default is not ...:
            return default
        raise ConfigError(f"{path}.{key}", "missing required field")
    value = obj[key]
    if expected is not None and not isinstance(value, expected):
        names = expected.__name__ if isinstance(expected, type) \
            else "/".join(t.__name__ for t in expected)
        raise ConfigError(f"{path}.{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _vec(obj, key, path, n, default=...):
    v = _get(obj, key, path, list, default)
    if v is default and default is not ...:
        return v
    if len(v) != n or not all(isinstance(c, (int, float)) for c in v):
        raise ConfigError(f"{path}.{key}", f"expected a list of {n} numbers")
    return tuple(float(c) for c in v)


def _parse_lighting(doc: dict, path: str) -> tuple[Lighting, tuple | None]:
    """Returns (lighting, preset sky color or None)."""
    preset_sky = None
    params = {}
    preset = _get(doc, "preset", path, str, None)
    if preset is not None:
        if preset not in LIGHTING_PRESETS:
            raise ConfigError(f"{path}.preset",
                              f"unknown preset {preset!r}; options: "
                              + ", ".join(sorted(LIGHTING_PRESETS)))
        chosen = LIGHTING_PRESETS[preset]
        params = {k: v for k, v in chosen.items() if k != "sky_color"}
        preset_sky = chosen["sky_color"]
    if "sun_direction" in doc:
        d = np.asarray(_vec(doc, "sun_direction", path, 3), dtype=np.float64)
        norm = np.linalg.norm(d)
        if norm <= 0:
            raise ConfigError(f"{path}.sun_direction", "must be a nonzero vector")
        params["sun_direction"] = tuple(d / norm)
    if "sun_intensity" in doc:
        params["sun_intensity"] = float(_get(doc, "sun_intensity", path, (int, float)))
    if "ambient_intensity" in doc:
        params["ambient_intensity"] = float(_get(doc, "ambient_intensity", path, (int, float)))
    lights = []
    for i, entry in enumerate(_get(doc, "point_lights", path, list, [])):
        lp = f"{path}.point_lights[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(lp, "expected an object")
        lights.append(PointLight(
            position_m=_vec(entry, "position_m", lp, 3),
            color=_vec(entry, "color", lp, 3, (1.0, 1.0, 1.0)),
            intensity=float(_get(entry, "intensity", lp, (int, float), 1.0)),
        ))
    if lights:
        params["point_lights"] = tuple(lights)
    try:
        return Lighting(**params), preset_sky
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_keyframe(entry: dict, path: str) -> KeyframeSpec:
    if not isinstance(entry, dict):
        raise ConfigError(path, "expected an object")
    t = float(_get(entry, "t", path, (int, float)))
    position = _vec(entry, "position", path, 3)
    look_at = _vec(entry, "look_at", path, 3, None) if "look_at" in entry else None
    quat = None
    if "orientation_wxyz" in entry:
        quat = _vec(entry, "orientation_wxyz", path, 4)
    if look_at is None and quat is None:
        raise ConfigError(path, "keyframe needs look_at or orientation_wxyz")
    return KeyframeSpec(t=t, position=position, look_at=look_at,
                        orientation_wxyz=quat)


def load_run_config(doc: dict) -> RunConfig:
    """Validate a parsed JSON document into a RunConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "top-level config must be an object")
    path = "$"
    terrain_doc = _get(doc, "terrain", path, dict, {})
    try:
        terrain = TerrainParams(
            extent_m=float(_get(terrain_doc, "extent_m", "$.terrain", (int, float), 100.0)),
            cell_size_m=float(_get(terrain_doc, "cell_size_m", "$.terrain", (int, float), 1.0)),
            amplitude_m=float(_get(terrain_doc, "amplitude_m", "$.terrain", (int, float), 4.0)),
            octaves=int(_get(terrain_doc, "octaves", "$.terrain", int, 4)),
            base_frequency=float(_get(terrain_doc, "base_frequency", "$.terrain", (int, float), 0.02)),
        )
    except ValueError as exc:
        raise ConfigError("$.terrain", str(exc)) from exc

    trees_doc = _get(doc, "trees", path, dict, {})
    weights = _get(trees_doc, "species_weights", "$.trees", list, None)
    if weights is not None:
        if len(weights) != SPECIES_COUNT:
            raise ConfigError("$.trees.species_weights",
                              f"expected {SPECIES_COUNT} weights, got {len(weights)}")
        weights = tuple(float(w) for w in weights)

    lighting_doc = _get(doc, "lighting", path, dict, {})
    lighting, preset_sky = _parse_lighting(lighting_doc, "$.lighting")
    sky = _vec(doc, "sky_color", path, 3, None)
    if sky is None:
        sky = preset_sky if preset_sky is not None else (0.53, 0.70, 0.92)

    try:
        scene = SceneConfig(
            master_seed=int(_get(doc, "master_seed", path, int, 0)),
            terrain=terrain,
            tree_density_per_ha=float(_get(trees_doc, "density_per_ha", "$.trees", (int, float), 200.0)),
            min_spacing_m=float(_get(trees_doc, "min_spacing_m", "$.trees", (int, float), 1.5)),
            species_weights=weights or (),
            lighting=lighting,
            fog_density=float(_get(doc, "fog_density", path, (int, float), 0.0)),
            sky_color=sky,
        )
    except ValueError as exc:
        raise ConfigError("$", str(exc)) from exc

    cam = _get(doc, "camera", path, dict, {})
    try:
        if "fx" in cam:
            intrinsics = CameraIntrinsics(
                width_px=int(_get(cam, "width_px", "$.camera", int)),
                height_px=int(_get(cam, "height_px", "$.camera", int)),
                fx=float(_get(cam, "fx", "$.camera", (int, float))),
                fy=float(_get(cam, "fy", "$.camera", (int, float))),
                cx=float(_get(cam, "cx", "$.camera", (int, float))),
                cy=float(_get(cam, "cy", "$.camera", (int, float))),
            )
        else:
            intrinsics = CameraIntrinsics.from_hfov(
                int(_get(cam, "width_px", "$.camera", int, 640)),
                int(_get(cam, "height_px", "$.camera", int, 480)),
                float(_get(cam, "hfov_deg", "$.camera", (int, float), 60.0)),
            )
    except ValueError as exc:
        raise ConfigError("$.camera", str(exc)) from exc

    lidar_doc = _get(doc, "lidar", path, dict, {})
    lidar = {
        "rings": int(_get(lidar_doc, "rings", "$.lidar", int, 16)),
        "azimuth_steps": int(_get(lidar_doc, "azimuth_steps", "$.lidar", int, 360)),
        "vfov_deg": _vec(lidar_doc, "vfov_deg", "$.lidar", 2, (-25.0, 5.0)),
        "max_range_m": float(_get(lidar_doc, "max_range_m", "$.lidar", (int, float), 80.0)),
    }
    if lidar["rings"] < 1 or lidar["azimuth_steps"] < 1:
        raise ConfigError("$.lidar", "rings and azimuth_steps must be >= 1")
    if not lidar["vfov_deg"][0] < lidar["vfov_deg"][1]:
        raise ConfigError("$.lidar.vfov_deg", "must satisfy lo < hi")

    traj_docs = _get(doc, "trajectories", path, list)
    if not traj_docs:
        raise ConfigError("$.trajectories", "at least one trajectory required")
    trajectories = []
    names = set()
    for i, td in enumerate(traj_docs):
        tp = f"$.trajectories[{i}]"
        if not isinstance(td, dict):
            raise ConfigError(tp, "expected an object")
        name = _get(td, "name", tp, str, f"seq{i}")
        if name in names:
            raise ConfigError(f"{tp}.name", f"duplicate trajectory name {name!r}")
        names.add(name)
        z_mode = _get(td, "z_mode", tp, str, "absolute")
        if z_mode not in ("absolute", "terrain_relative"):
            raise ConfigError(f"{tp}.z_mode", "must be absolute or terrain_relative")
        kf_docs = _get(td, "keyframes", tp, list)
        if len(kf_docs) < 2:
            raise ConfigError(f"{tp}.keyframes", "need at least 2 keyframes")
        keyframes = tuple(
            _parse_keyframe(kd, f"{tp}.keyframes[{k}]") for k, kd in enumerate(kf_docs)
        )
        times = [kf.t for kf in keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError(f"{tp}.keyframes", "timestamps must be strictly increasing")
        trajectories.append(TrajectorySpec(
            name=name,
            frame_rate_hz=float(_get(td, "frame_rate_hz", tp, (int, float), 10.0)),
            keyframes=keyframes,
            z_mode=z_mode,
        ))

    split_doc = _get(doc, "split", path, dict, {})
    test_fraction = float(_get(split_doc, "test_fraction", "$.split", (int, float), 0.1))
    if not 0.0 <= test_fraction <= 1.0:
        raise ConfigError("$.split.test_fraction", "must be in [0, 1]")

    radial = int(_get(doc, "radial_segments", path, int, 12))
    if radial < 3:
        raise ConfigError("$.radial_segments", "must be >= 3")
    min_area = int(_get(doc, "min_area_px", path, int, 16))
    if min_area < 0:
        raise ConfigError("$.min_area_px", "must be >= 0")

    return RunConfig(
        scene=scene,
        intrinsics=intrinsics,
        trajectories=tuple(trajectories),
        lidar=lidar,
        test_fraction=test_fraction,
        split_seed=int(_get(split_doc, "seed", "$.split", int, 0)),
        min_area_px=min_area,
        radial_segments=radial,
        raw=doc,
    )


def load_config_file(path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"$ (line {exc.lineno})", exc.msg) from exc
    return load_run_config(doc)


def resolve_trajectory(spec: TrajectorySpec, terrain: Terrain) -> Trajectory:
    """Turn keyframe specs into concrete Poses against the built terrain."""
    keyframes = []
    for kf in spec.keyframes:
        pos = list(kf.position)
        if spec.z_mode == "terrain_relative":
            pos[2] += sample_height(terrain, pos[0], pos[1])
        if kf.orientation_wxyz is not None:
            quat = quat_normalize(kf.orientation_wxyz)
        else:
            target = list(kf.look_at)
            if spec.z_mode == "terrain_relative":
                target[2] += sample_height(terrain, target[0], target[1])
            quat = look_at_quat(pos, target)
        keyframes.append((kf.t, Pose(tuple(pos), tuple(quat))))
    return Trajectory(keyframes=tuple(keyframes), frame_rate_hz=spec.frame_rate_hz,
                      name=spec.name)
