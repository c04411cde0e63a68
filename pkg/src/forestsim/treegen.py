"""Labeled triangle meshes for trees and analytic biometrics.

A tree is a tapered surface-of-revolution trunk, a seeded set of branch
cylinders, and an ellipsoid leaf crown. Every triangle carries a part label
so the renderer can apply the trunk-only instance-mask rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import SpeciesSpec, TreeInstance, derive_rng

BREAST_HEIGHT_M = 1.30  # international forestry convention


class PartLabel(enum.IntEnum):
    # values match the semantic raster codes
    TRUNK = 2
    BRANCH = 3
    LEAF = 4


@dataclass
class TreeMesh:
    vertices: np.ndarray   # (n, 3) float64, world space
    triangles: np.ndarray  # (m, 3) int32
    labels: np.ndarray     # (m,) uint8 PartLabel values
    instance_id: int

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("mesh vertices must be finite")
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle indices out of range")
        if len(self.labels) != len(self.triangles):
            raise ValueError("one label per triangle required")
        if not np.any(self.labels == PartLabel.TRUNK):
            raise ValueError("tree mesh must contain at least one trunk triangle")


def draw_height_m(species: SpeciesSpec, inst: TreeInstance) -> float:
    """Total tree height; the first draw of the instance's tree stream."""
    rng = derive_rng(inst.seed, "tree", 0)
    lo, hi = species.height_range_m
    return inst.scale * rng.uniform(lo, hi)


def trunk_radius_at(species: SpeciesSpec, inst: TreeInstance, h: float,
                    total_height: float) -> float:
    """Analytic trunk profile r(h) = scale * R0 * (1 - h/H)^taper."""
    frac = max(0.0, 1.0 - h / total_height)
    return inst.scale * species.trunk_base_radius_m * frac ** species.trunk_taper_exponent


def compute_dbh(species: SpeciesSpec, inst: TreeInstance) -> float:
    """Trunk diameter at breast height (1.3 m above the base)."""
    H = draw_height_m(species, inst)
    if H <= BREAST_HEIGHT_M:
        raise ValueError(
            f"tree height {H:.3f} m is below breast height {BREAST_HEIGHT_M} m"
        )
    return 2.0 * trunk_radius_at(species, inst, BREAST_HEIGHT_M, H)


def _ring(radius: float, z: float, segments: int) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(segments) / segments
    return np.column_stack([radius * np.cos(ang), radius * np.sin(ang),
                            np.full(segments, z)])


def _tube_triangles(ring0_start: int, ring1_start: int, segments: int) -> list[tuple[int, int, int]]:
    tris = []
    for k in range(segments):
        k1 = (k + 1) % segments
        a, b = ring0_start + k, ring0_start + k1
        c, d = ring1_start + k, ring1_start + k1
        tris.append((a, b, c))
        tris.append((b, d, c))
    return tris


def _cylinder(p0: np.ndarray, p1: np.ndarray, r0: float, r1: float,
              segments: int, base_index: int):
    """Open tube from p0 to p1 with end radii r0/r1."""
    axis = p1 - p0
    length = np.linalg.norm(axis)
    axis = axis / length
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    ang = 2.0 * np.pi * np.arange(segments) / segments
    circle = np.outer(np.cos(ang), u) + np.outer(np.sin(ang), v)
    verts = np.vstack([p0 + r0 * circle, p1 + r1 * circle])
    tris = _tube_triangles(base_index, base_index + segments, segments)
    return verts, tris


def _ellipsoid(center: np.ndarray, radii: np.ndarray, slices: int, stacks: int,
               base_index: int):
    """Lat/long triangulated ellipsoid."""
    verts = [center + radii * np.array([0.0, 0.0, -1.0])]
    for i in range(1, stacks):
        phi = np.pi * i / stacks - np.pi / 2.0  # -pi/2 .. pi/2
        ang = 2.0 * np.pi * np.arange(slices) / slices
        ring = np.column_stack([
            np.cos(phi) * np.cos(ang), np.cos(phi) * np.sin(ang),
            np.full(slices, np.sin(phi)),
        ])
        verts.append(center + radii * ring)
    verts.append(center + radii * np.array([0.0, 0.0, 1.0]))
    verts = np.vstack([np.atleast_2d(v) for v in verts])

    tris = []
    south = base_index
    north = base_index + 1 + (stacks - 1) * slices
    ring_start = lambda i: base_index + 1 + (i - 1) * slices  # noqa: E731
    for k in range(slices):
        k1 = (k + 1) % slices
        tris.append((south, ring_start(1) + k1, ring_start(1) + k))
    for i in range(1, stacks - 1):
        tris.extend(_tube_triangles(ring_start(i), ring_start(i + 1), slices))
    for k in range(slices):
        k1 = (k + 1) % slices
        tris.append((north, ring_start(stacks - 1) + k, ring_start(stacks - 1) + k1))
    return verts, tris


def build_tree_mesh(species: SpeciesSpec, inst: TreeInstance,
               radial_segments: int = 12) -> TreeMesh:
    """Build the labeled world-space mesh for one placed tree.

    The trunk uses radial_segments rings vertically as well, so slicing
    accuracy improves uniformly with the quality knob. Branch count, attach
    heights and azimuths come from the instance's seeded stream.
    """
    if radial_segments < 3:
        raise ValueError("radial_segments must be >= 3")
    rng = derive_rng(inst.seed, "tree", 0)
    lo, hi = species.height_range_m
    H = inst.scale * rng.uniform(lo, hi)
    taper = species.trunk_taper_exponent

    verts: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []
    labels: list[int] = []
    count = 0

    def add(v, t, label):
        nonlocal count
        verts.append(v)
        tris.extend(t)
        labels.extend([label] * len(t))
        count += len(v)

    # trunk: rings bottom-up; tapered trunks close with an apex fan, an
    # untapered trunk is a plain open cylinder
    n_rings = radial_segments
    ring_z = H * np.arange(n_rings) / n_rings
    trunk_verts = [
        _ring(trunk_radius_at(species, inst, z, H), z, radial_segments)
        for z in ring_z
    ]
    trunk_tris: list[tuple[int, int, int]] = []
    for i in range(n_rings - 1):
        trunk_tris.extend(_tube_triangles(i * radial_segments, (i + 1) * radial_segments,
                                          radial_segments))
    if taper > 0:
        apex = len(trunk_verts) * radial_segments
        trunk_verts.append(np.array([[0.0, 0.0, H]]))
        top = (n_rings - 1) * radial_segments
        for k in range(radial_segments):
            trunk_tris.append((top + k, top + (k + 1) % radial_segments, apex))
    else:
        top_ring = _ring(trunk_radius_at(species, inst, H, H), H, radial_segments)
        trunk_verts.append(top_ring)
        trunk_tris.extend(_tube_triangles((n_rings - 1) * radial_segments,
                                          n_rings * radial_segments, radial_segments))
    add(np.vstack(trunk_verts), trunk_tris, PartLabel.TRUNK)

    branch_lo, branch_hi = species.branch_count_range
    n_branches = int(rng.integers(branch_lo, branch_hi + 1))
    branch_segments = max(3, radial_segments // 2)
    branch_len = 0.6 * inst.scale * species.crown_radii_m[0]
    for _ in range(n_branches):
        attach_frac = rng.uniform(0.35, 0.8)
        azimuth = rng.uniform(0.0, 2.0 * np.pi)
        pitch = rng.uniform(0.1, 0.45)
        attach_h = attach_frac * H
        r_attach = trunk_radius_at(species, inst, attach_h, H)
        r_branch = species.branch_radius_fraction * r_attach
        if r_branch <= 0:
            continue
        start = np.array([0.0, 0.0, attach_h])
        direction = np.array([
            np.cos(azimuth) * np.cos(pitch),
            np.sin(azimuth) * np.cos(pitch),
            np.sin(pitch),
        ])
        end = start + branch_len * direction
        v, t = _cylinder(start, end, r_branch, 0.55 * r_branch, branch_segments, count)
        add(v, t, PartLabel.BRANCH)

    crown_center = np.array([0.0, 0.0, 0.75 * H])
    crown_radii = inst.scale * np.asarray(species.crown_radii_m)
    v, t = _ellipsoid(crown_center, crown_radii, radial_segments,
                      max(3, radial_segments // 2), count)
    add(v, t, PartLabel.LEAF)

    vertices = np.vstack(verts)
    cy, sy = np.cos(inst.yaw_rad), np.sin(inst.yaw_rad)
    rot = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    vertices = vertices @ rot.T
    vertices += np.array([inst.position_xy_m[0], inst.position_xy_m[1],
                          inst.base_elevation_m])
    return TreeMesh(
        vertices=vertices,
        triangles=np.asarray(tris, dtype=np.int32),
        labels=np.asarray(labels, dtype=np.uint8),
        instance_id=inst.instance_id,
    )


def tree_aabb(mesh: TreeMesh) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise (min, max) bounds over the mesh vertices."""
    if len(mesh.vertices) == 0:
        raise ValueError("empty mesh has no bounds")
    return mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)


def write_obj(mesh: TreeMesh, path) -> None:
    """ASCII OBJ dump with usemtl trunk|branch|leaf groups for inspection."""
    names = {PartLabel.TRUNK: "trunk", PartLabel.BRANCH: "branch", PartLabel.LEAF: "leaf"}
    with open(path, "w") as fh:
        fh.write(f"# forestsim tree instance {mesh.instance_id}\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for label in (PartLabel.TRUNK, PartLabel.BRANCH, PartLabel.LEAF):
            idx = np.flatnonzero(mesh.labels == label)
            if idx.size == 0:
                continue
            fh.write(f"usemtl {names[label]}\n")
            for t in mesh.triangles[idx]:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
