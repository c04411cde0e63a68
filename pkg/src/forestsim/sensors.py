"""Multi-modal frame rendering and LiDAR simulation along camera trajectories.

One primary ray per pixel fills RGB, z-depth, trunk-instance and semantic
rasters from the same hit, so the four modalities are pixel-aligned by
construction. LiDAR casts a uniform elevation x azimuth grid from the same
pose. Worker threads only ever own disjoint ray bands, so output is
independent of the thread count.
"""

from __future__ import annotations

import bisect
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bvh import BVH, any_hit_kernel, closest_hit_kernel, build_bvh, make_soup, tree_mesh_soup
from .core import (SEM_SKY, SEM_TERRAIN, SEM_TRUNK, SPECIES_LIBRARY, CameraIntrinsics,
                   Pose, SceneConfig, Terrain, derive_rng)
from .math3d import quat_slerp, quat_to_rotmat
from .procgen import PlacementResult, generate_terrain, place_trees
from .treegen import PartLabel, TreeMesh, build_tree_mesh

TERRAIN_ALBEDO = (0.27, 0.24, 0.15)


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered camera keyframes plus the capture rate."""

    keyframes: tuple[tuple[float, Pose], ...]
    frame_rate_hz: float
    name: str = "seq"

    def __post_init__(self) -> None:
        if len(self.keyframes) < 2:
            raise ValueError("a trajectory needs at least 2 keyframes")
        times = [t for t, _ in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("keyframe timestamps must be strictly increasing")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame_rate_hz must be > 0")


def interpolate_pose(traj: Trajectory, t: float) -> Pose:
    """Lerp position / slerp orientation between the bracketing keyframes."""
    times = [kt for kt, _ in traj.keyframes]
    if t < times[0] or t > times[-1]:
        raise ValueError(f"t={t} outside trajectory range [{times[0]}, {times[-1]}]")
    i = bisect.bisect_right(times, t) - 1
    if times[i] == t:
        return traj.keyframes[i][1]
    a_t, a = traj.keyframes[i]
    b_t, b = traj.keyframes[i + 1]
    u = (t - a_t) / (b_t - a_t)
    pos = (1.0 - u) * np.asarray(a.position_m) + u * np.asarray(b.position_m)
    q = quat_slerp(a.orientation, b.orientation, u)
    return Pose(tuple(pos), tuple(q))


@dataclass
class FrameBundle:
    """Pixel-aligned RGB / depth / trunk-instance / semantic rasters."""

    rgb: np.ndarray        # (H,W,3) uint8
    depth_m: np.ndarray    # (H,W) float32, 0 = no hit
    instance: np.ndarray   # (H,W) uint16, 0 = background
    semantic: np.ndarray   # (H,W) uint8
    timestamp_s: float
    pose: Pose
    intrinsics: CameraIntrinsics

    def __post_init__(self) -> None:
        h, w = self.depth_m.shape
        if self.rgb.shape != (h, w, 3) or self.instance.shape != (h, w) \
                or self.semantic.shape != (h, w):
            raise ValueError("modality rasters must share dimensions")
        if np.any(self.semantic[self.instance != 0] != SEM_TRUNK):
            raise ValueError("instance pixels must be trunk-labeled")
        if np.any((self.depth_m > 0) != (self.semantic != SEM_SKY)):
            raise ValueError("depth>0 must coincide with non-sky pixels")


@dataclass
class LidarScan:
    """One sweep; points carry world xyz plus hit instance and beam indices."""

    xyz: np.ndarray           # (n,3) float64 world
    instance_ids: np.ndarray  # (n,) uint16 (0 = terrain / background)
    ring_index: np.ndarray    # (n,) uint8
    azimuth_rad: np.ndarray   # (n,) float64
    sensor_pose: Pose
    timestamp_s: float

    def __len__(self) -> int:
        return len(self.xyz)


@dataclass
class Scene:
    """Assembled world: geometry, acceleration structure, per-tree truth."""

    config: SceneConfig
    terrain: Terrain
    placement: PlacementResult
    meshes: list[TreeMesh]
    bvh: BVH
    radial_segments: int = 12
    threads: int = field(default=1, compare=False)


def terrain_soup(terrain: Terrain):
    rows, cols = terrain.rows, terrain.cols
    xs = np.arange(cols, dtype=np.float64) * terrain.cell_size_m
    ys = np.arange(rows, dtype=np.float64) * terrain.cell_size_m
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel(), terrain.elevations_m.ravel()])
    # two triangles per grid cell
    j, i = np.meshgrid(np.arange(rows - 1), np.arange(cols - 1), indexing="ij")
    v00 = (j * cols + i).ravel()
    v10 = v00 + 1
    v01 = v00 + cols
    v11 = v01 + 1
    tris = np.vstack([
        np.column_stack([v00, v10, v01]),
        np.column_stack([v10, v11, v01]),
    ]).astype(np.int64)
    m = len(tris)
    albedo = np.tile(np.asarray(TERRAIN_ALBEDO), (m, 1))
    return make_soup(vertices, tris, np.zeros(m, dtype=np.uint32),
                     np.full(m, SEM_TERRAIN, dtype=np.uint8), albedo)


def assemble_scene(config: SceneConfig, radial_segments: int = 12,
                   threads: int = 1) -> Scene:
    """Generate terrain, place trees, build meshes and the scene BVH."""
    tp = config.terrain
    terrain = generate_terrain(tp.extent_m, tp.cell_size_m, tp.amplitude_m,
                               tp.octaves, tp.base_frequency,
                               derive_rng(config.master_seed, "terrain", 0))
    placement = place_trees(terrain, config.tree_density_per_ha,
                            config.min_spacing_m, config.species_weights,
                            derive_rng(config.master_seed, "placement", 0))
    meshes = []
    soups = [terrain_soup(terrain)]
    for inst in placement.trees:
        spec = SPECIES_LIBRARY[inst.species_index]
        mesh = build_tree_mesh(spec, inst, radial_segments)
        meshes.append(mesh)
        soups.append(tree_mesh_soup(mesh, spec.bark_albedo, spec.leaf_albedo))
    return Scene(config=config, terrain=terrain, placement=placement,
                 meshes=meshes, bvh=build_bvh(soups),
                 radial_segments=radial_segments, threads=threads)


def _run_banded(kernel_call, n: int, threads: int) -> None:
    """Run kernel_call(lo, hi) over disjoint bands, optionally on threads."""
    if threads <= 1 or n < 2048:
        kernel_call(0, n)
        return
    bands = []
    step = (n + threads - 1) // threads
    for lo in range(0, n, step):
        bands.append((lo, min(lo + step, n)))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda b: kernel_call(b[0], b[1]), bands))


def _closest_banded(bvh: BVH, origins, dirs, t_min: float, threads: int):
    n = len(origins)
    out_t = np.empty(n, dtype=np.float64)
    out_idx = np.empty(n, dtype=np.int64)

    def call(lo, hi):
        closest_hit_kernel(bvh.node_min, bvh.node_max, bvh.node_left,
                           bvh.node_count, bvh.order, bvh.soup.p0,
                           bvh.soup.e1, bvh.soup.e2, origins, dirs,
                           t_min, out_t, out_idx, lo, hi)

    _run_banded(call, n, threads)
    return out_t, out_idx


def _occluded_banded(bvh: BVH, origins, dirs, t_min: float, t_max: float,
                     threads: int):
    n = len(origins)
    out = np.zeros(n, dtype=np.bool_)

    def call(lo, hi):
        any_hit_kernel(bvh.node_min, bvh.node_max, bvh.node_left,
                       bvh.node_count, bvh.order, bvh.soup.p0,
                       bvh.soup.e1, bvh.soup.e2, origins, dirs,
                       t_min, t_max, out, lo, hi)

    _run_banded(call, n, threads)
    return out


def camera_rays(pose: Pose, intrinsics: CameraIntrinsics):
    """World-space unit ray directions through every pixel center."""
    w, h = intrinsics.width_px, intrinsics.height_px
    px = (np.arange(w) + 0.5 - intrinsics.cx) / intrinsics.fx
    py = (np.arange(h) + 0.5 - intrinsics.cy) / intrinsics.fy
    gx, gy = np.meshgrid(px, py)
    dirs_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1).reshape(-1, 3)
    dirs_cam /= np.linalg.norm(dirs_cam, axis=1, keepdims=True)
    R = quat_to_rotmat(pose.orientation)
    return dirs_cam @ R.T


def render_frame(scene: Scene, pose: Pose, intrinsics: CameraIntrinsics,
                 timestamp_s: float = 0.0) -> FrameBundle:
    """Ray-cast one synchronized multi-modal frame at the given pose."""
    w, h = intrinsics.width_px, intrinsics.height_px
    n = w * h
    cfg = scene.config
    dirs = np.ascontiguousarray(camera_rays(pose, intrinsics))
    origin = np.asarray(pose.position_m, dtype=np.float64)
    origins = np.broadcast_to(origin, (n, 3))
    origins = np.ascontiguousarray(origins)

    hit_t, hit_idx = _closest_banded(scene.bvh, origins, dirs, 1e-6, scene.threads)
    hit = hit_idx >= 0
    soup = scene.bvh.soup

    semantic = np.zeros(n, dtype=np.uint8)
    instance = np.zeros(n, dtype=np.uint16)
    depth = np.zeros(n, dtype=np.float32)
    labels = soup.labels[hit_idx[hit]]
    semantic[hit] = labels
    inst_hit = soup.instance_ids[hit_idx[hit]]
    trunk = labels == int(PartLabel.TRUNK)
    inst_vals = np.zeros(len(inst_hit), dtype=np.uint16)
    inst_vals[trunk] = inst_hit[trunk].astype(np.uint16)
    instance[hit] = inst_vals

    R = quat_to_rotmat(pose.orientation)
    forward = R[:, 2]
    z_depth = hit_t[hit] * (dirs[hit] @ forward)
    depth[hit] = z_depth.astype(np.float32)

    # shading
    rgb = np.empty((n, 3), dtype=np.float64)
    rgb[:] = cfg.sky_color
    if np.any(hit):
        P = origins[hit] + hit_t[hit, None] * dirs[hit]
        N = soup.normals[hit_idx[hit]].copy()
        facing = np.einsum("ij,ij->i", N, dirs[hit])
        N[facing > 0] *= -1.0
        albedo = soup.albedo[hit_idx[hit]]
        light = scene.config.lighting
        sun_dir = np.asarray(light.sun_direction, dtype=np.float64)

        ndotl = N @ sun_dir
        lit = ndotl > 0
        shadowed = np.zeros(lit.sum(), dtype=np.bool_)
        if lit.any() and light.sun_intensity > 0:
            sh_origins = np.ascontiguousarray(P[lit] + 1e-4 * N[lit])
            sh_dirs = np.ascontiguousarray(np.broadcast_to(sun_dir, sh_origins.shape))
            shadowed = _occluded_banded(scene.bvh, sh_origins, sh_dirs,
                                        1e-6, np.inf, scene.threads)
        direct = np.zeros(len(P))
        direct[lit] = np.where(shadowed, 0.0, ndotl[lit] * light.sun_intensity)
        color = albedo * (direct[:, None] + light.ambient_intensity)

        for pl in light.point_lights:
            to_l = np.asarray(pl.position_m) - P
            d2 = np.einsum("ij,ij->i", to_l, to_l)
            d2 = np.maximum(d2, 1e-6)
            l_dir = to_l / np.sqrt(d2)[:, None]
            nl = np.maximum(0.0, np.einsum("ij,ij->i", N, l_dir))
            color += albedo * np.asarray(pl.color) * (pl.intensity * nl / d2)[:, None]

        if cfg.fog_density > 0:
            trans = np.exp(-cfg.fog_density * hit_t[hit])[:, None]
            color = color * trans + np.asarray(cfg.sky_color) * (1.0 - trans)
        rgb[hit] = color

    rgb8 = (np.clip(rgb, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    return FrameBundle(
        rgb=rgb8.reshape(h, w, 3),
        depth_m=depth.reshape(h, w),
        instance=instance.reshape(h, w),
        semantic=semantic.reshape(h, w),
        timestamp_s=timestamp_s,
        pose=pose,
        intrinsics=intrinsics,
    )


def lidar_directions(rings: int, azimuth_steps: int, vfov_deg: tuple[float, float]):
    """Unit directions on the elevation x azimuth grid, in sensor frame."""
    lo, hi = vfov_deg
    elev = np.radians(np.linspace(lo, hi, rings))
    azim = 2.0 * np.pi * np.arange(azimuth_steps) / azimuth_steps
    ee, aa = np.meshgrid(elev, azim, indexing="ij")
    # sensor frame: forward = camera z, right = camera x, up = -camera y
    x = np.sin(aa) * np.cos(ee)
    y = -np.sin(ee)
    z = np.cos(aa) * np.cos(ee)
    dirs = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    ring_idx = np.repeat(np.arange(rings, dtype=np.uint8), azimuth_steps)
    azimuths = np.tile(azim, rings)
    return dirs, ring_idx, azimuths


def simulate_lidar(scene: Scene, pose: Pose, rings: int = 16,
                   azimuth_steps: int = 360,
                   vfov_deg: tuple[float, float] = (-25.0, 5.0),
                   max_range_m: float = 80.0,
                   timestamp_s: float = 0.0) -> LidarScan:
    """Cast one LiDAR sweep; returns all parts hit within range."""
    if rings < 1 or azimuth_steps < 1:
        raise ValueError("rings and azimuth_steps must be >= 1")
    if not vfov_deg[0] < vfov_deg[1]:
        raise ValueError("vfov_deg must satisfy lo < hi")
    if max_range_m <= 0:
        raise ValueError("max_range_m must be > 0")
    dirs_sensor, ring_idx, azimuths = lidar_directions(rings, azimuth_steps, vfov_deg)
    R = quat_to_rotmat(pose.orientation)
    dirs = np.ascontiguousarray(dirs_sensor @ R.T)
    origin = np.asarray(pose.position_m, dtype=np.float64)
    origins = np.ascontiguousarray(np.broadcast_to(origin, dirs.shape))

    hit_t, hit_idx = _closest_banded(scene.bvh, origins, dirs, 1e-6, scene.threads)
    keep = (hit_idx >= 0) & (hit_t <= max_range_m)
    xyz = origins[keep] + hit_t[keep, None] * dirs[keep]
    inst = scene.bvh.soup.instance_ids[hit_idx[keep]].astype(np.uint16)
    return LidarScan(
        xyz=xyz,
        instance_ids=inst,
        ring_index=ring_idx[keep],
        azimuth_rad=azimuths[keep],
        sensor_pose=pose,
        timestamp_s=timestamp_s,
    )


def frame_times(traj: Trajectory) -> list[float]:
    """Capture timestamps t0 + k/rate up to the last keyframe, inclusive."""
    t0 = traj.keyframes[0][0]
    t1 = traj.keyframes[-1][0]
    count = int(np.floor((t1 - t0) * traj.frame_rate_hz + 1e-9)) + 1
    return [t0 + k / traj.frame_rate_hz for k in range(count)]


def render_sequence(scene: Scene, traj: Trajectory, intrinsics: CameraIntrinsics,
                    lidar_params: dict | None = None):
    """Yield synchronized (FrameBundle, LidarScan) pairs along a trajectory."""
    lidar_params = lidar_params or {}
    for k, t in enumerate(frame_times(traj)):
        # per-frame stream, reserved for frame-level stochastic effects
        derive_rng(scene.config.master_seed, f"frame:{traj.name}", k)
        pose = interpolate_pose(traj, t)
        frame = render_frame(scene, pose, intrinsics, timestamp_s=t)
        scan = simulate_lidar(scene, pose, timestamp_s=t, **lidar_params)
        yield frame, scan
