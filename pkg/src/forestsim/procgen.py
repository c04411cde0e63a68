"""Terrain synthesis and randomized tree placement.

Terrain is multi-octave (fBm) value noise on a uniform grid. Placement is
sequential dart throwing with a minimum-spacing rejection rule, so results
are deterministic in (config, seed) and independent of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Terrain, TreeInstance

_GOLDEN64 = np.uint64(0x9E3779B97F4A7C15)


def _hash_lattice(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """splitmix64-style avalanche of integer lattice coordinates -> [-1, 1)."""
    n = (ix.astype(np.uint64) * _GOLDEN64) ^ (iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F))
    n ^= np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    n ^= n >> np.uint64(30)
    n *= np.uint64(0xBF58476D1CE4E5B9)
    n ^= n >> np.uint64(27)
    n *= np.uint64(0x94D049BB133111EB)
    n ^= n >> np.uint64(31)
    return n.astype(np.float64) * (2.0 ** -63) - 1.0


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def value_noise(x: np.ndarray, y: np.ndarray, seed: int) -> np.ndarray:
    """Smoothly interpolated lattice noise in [-1, 1)."""
    ix = np.floor(x).astype(np.int64)
    iy = np.floor(y).astype(np.int64)
    fx = x - ix
    fy = y - iy
    v00 = _hash_lattice(ix, iy, seed)
    v10 = _hash_lattice(ix + 1, iy, seed)
    v01 = _hash_lattice(ix, iy + 1, seed)
    v11 = _hash_lattice(ix + 1, iy + 1, seed)
    sx = _smoothstep(fx)
    sy = _smoothstep(fy)
    top = v00 + (v10 - v00) * sx
    bot = v01 + (v11 - v01) * sx
    return top + (bot - top) * sy


def generate_terrain(extent_m: float, cell_size_m: float, amplitude_m: float,
                     octaves: int, base_frequency: float,
                     rng: np.random.Generator) -> Terrain:
    """Build a heightfield of ceil(extent/cell)+1 nodes per side.

    Elevation is sum_k amplitude * 0.5^k * noise(p * base_frequency * 2^k),
    which bounds |elevation| < 2 * amplitude for any octave count.
    """
    if not (np.isfinite(extent_m) and extent_m > 0):
        raise ValueError("extent_m must be positive and finite")
    if not (np.isfinite(cell_size_m) and cell_size_m > 0):
        raise ValueError("cell_size_m must be positive and finite")
    if octaves < 1:
        raise ValueError("octaves must be >= 1")
    n = int(np.ceil(extent_m / cell_size_m)) + 1
    base_seed = int(rng.integers(0, 2 ** 63))

    cols = np.arange(n, dtype=np.float64) * cell_size_m
    xs, ys = np.meshgrid(cols, cols)
    elev = np.zeros((n, n), dtype=np.float64)
    for k in range(octaves):
        f = base_frequency * (2.0 ** k)
        octave_seed = (base_seed + k * 0x9E3779B9) & 0xFFFFFFFFFFFFFFFF
        elev += amplitude_m * (0.5 ** k) * value_noise(xs * f, ys * f, octave_seed)
    return Terrain(cell_size_m, elev)


def sample_height(terrain: Terrain, x_m: float, y_m: float) -> float:
    """Bilinear elevation at a world point; querying outside the grid is an error."""
    gx = x_m / terrain.cell_size_m
    gy = y_m / terrain.cell_size_m
    if not (0.0 <= gx <= terrain.cols - 1 and 0.0 <= gy <= terrain.rows - 1):
        raise ValueError(
            f"({x_m}, {y_m}) outside terrain extent "
            f"[0, {terrain.extent_x_m}] x [0, {terrain.extent_y_m}]"
        )
    i = min(int(np.floor(gx)), terrain.cols - 2)
    j = min(int(np.floor(gy)), terrain.rows - 2)
    fx = gx - i
    fy = gy - j
    e = terrain.elevations_m
    top = e[j, i] + (e[j, i + 1] - e[j, i]) * fx
    bot = e[j + 1, i] + (e[j + 1, i + 1] - e[j + 1, i]) * fx
    return float(top + (bot - top) * fy)


def sample_species(weights, rng: np.random.Generator, size: int | None = None):
    """Draw species indices with probability proportional to weights.

    Returns a scalar int when size is None, else an int array of that length.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("species weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("species weights must sum > 0")
    cum = np.cumsum(w)
    u = rng.random(size)
    idx = np.searchsorted(cum, u * total, side="right")
    if size is None:
        return int(idx)
    return idx.astype(np.int64)


@dataclass(frozen=True)
class PlacementResult:
    trees: tuple[TreeInstance, ...]
    attempted: int
    accepted: int

    def __post_init__(self) -> None:
        if self.accepted != len(self.trees) or self.accepted > self.attempted:
            raise ValueError("inconsistent placement counts")


def place_trees(terrain: Terrain, density_per_ha: float, min_spacing_m: float,
                species_weights, rng: np.random.Generator) -> PlacementResult:
    """Dart-throwing placement with a pairwise minimum-spacing guarantee.

    Throws uniform darts until round(density * area) trees are accepted or
    30 * target consecutive darts have been rejected. Under-filled output is
    reported via attempted/accepted, never raised.
    """
    if density_per_ha < 0:
        raise ValueError("density must be >= 0")
    if min_spacing_m <= 0:
        raise ValueError("min_spacing_m must be > 0")
    target = int(round(density_per_ha * terrain.area_ha))
    trees: list[TreeInstance] = []
    if target == 0:
        return PlacementResult((), 0, 0)

    ext_x = terrain.extent_x_m
    ext_y = terrain.extent_y_m
    spacing_sq = min_spacing_m * min_spacing_m
    positions = np.empty((target, 2), dtype=np.float64)
    attempted = 0
    consecutive_rejects = 0
    max_consecutive = 30 * target
    while len(trees) < target and consecutive_rejects < max_consecutive:
        x = rng.uniform(0.0, ext_x)
        y = rng.uniform(0.0, ext_y)
        attempted += 1
        k = len(trees)
        if k > 0:
            d2 = (positions[:k, 0] - x) ** 2 + (positions[:k, 1] - y) ** 2
            if d2.min() < spacing_sq:
                consecutive_rejects += 1
                continue
        consecutive_rejects = 0
        positions[k] = (x, y)
        trees.append(TreeInstance(
            instance_id=k + 1,
            species_index=sample_species(species_weights, rng),
            position_xy_m=(x, y),
            base_elevation_m=sample_height(terrain, x, y),
            yaw_rad=rng.uniform(0.0, 2.0 * np.pi),
            scale=rng.uniform(0.8, 1.2),
            seed=int(rng.integers(0, 2 ** 63)),
        ))
    return PlacementResult(tuple(trees), attempted, len(trees))
