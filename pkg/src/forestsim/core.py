"""Shared scene types and the deterministic seeded RNG contract.

Every random draw anywhere in the pipeline comes from a Generator returned
by :func:`derive_rng`, so any run is reproducible from a master seed and
independent of scheduling.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

_U64 = 0xFFFFFFFFFFFFFFFF

# Semantic raster codes (8-bit), shared by renderer / annotator / preview.
SEM_SKY = 0
SEM_TERRAIN = 1
SEM_TRUNK = 2
SEM_BRANCH = 3
SEM_LEAF = 4


def derive_rng(master_seed: int, stream_label: str, index: int) -> np.random.Generator:
    """Derive an independent RNG stream keyed by (seed, label, index).

    Splittable counter-based scheme: the stream state is a hash of the three
    keys, so derivation order and thread scheduling cannot change any stream.
    Identical inputs always give identical streams.
    """
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", master_seed & _U64))
    h.update(stream_label.encode("utf-8"))
    h.update(struct.pack("<Q", index & _U64))
    state = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.PCG64(state))


@dataclass(frozen=True)
class SpeciesSpec:
    """Parametric definition of one tree species.

    The shipped library entries are hand-tuned presets (real parameter
    tables for these species are not published); see SPECIES_LIBRARY.
    """

    name: str
    trunk_base_radius_m: float
    trunk_taper_exponent: float
    height_range_m: tuple[float, float]
    branch_count_range: tuple[int, int]
    branch_radius_fraction: float
    crown_radii_m: tuple[float, float, float]
    bark_albedo: tuple[float, float, float]
    leaf_albedo: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.trunk_base_radius_m <= 0:
            raise ValueError("trunk_base_radius_m must be > 0")
        if self.trunk_taper_exponent < 0:
            raise ValueError("trunk_taper_exponent must be >= 0")
        lo, hi = self.height_range_m
        if not (0 < lo <= hi):
            raise ValueError("height_range_m must satisfy 0 < min <= max")
        blo, bhi = self.branch_count_range
        if blo < 0 or bhi < blo:
            raise ValueError("branch_count_range must satisfy 0 <= min <= max")
        if not (0 < self.branch_radius_fraction < 1):
            raise ValueError("branch_radius_fraction must be in (0,1)")
        if any(r <= 0 for r in self.crown_radii_m):
            raise ValueError("crown radii must be > 0")
        for albedo in (self.bark_albedo, self.leaf_albedo):
            if any(not (0.0 <= c <= 1.0) for c in albedo):
                raise ValueError("albedo components must be in [0,1]")


@dataclass(frozen=True)
class TreeInstance:
    """A placed, seeded tree. instance_id 0 is reserved for background."""

    instance_id: int
    species_index: int
    position_xy_m: tuple[float, float]
    base_elevation_m: float
    yaw_rad: float
    scale: float
    seed: int

    def __post_init__(self) -> None:
        if self.instance_id < 1:
            raise ValueError("instance_id must be >= 1 (0 is background)")
        if self.scale <= 0:
            raise ValueError("scale must be > 0")


class Terrain:
    """Heightfield on a uniform grid; the ground every object sits on.

    Grid node (row, col) sits at world (x=col*cell_size, y=row*cell_size).
    Immutable after construction.
    """

    def __init__(self, cell_size_m: float, elevations_m: np.ndarray):
        elevations = np.asarray(elevations_m, dtype=np.float64)
        if elevations.ndim != 2 or elevations.size == 0:
            raise ValueError("elevations_m must be a non-empty 2D grid")
        if not np.all(np.isfinite(elevations)):
            raise ValueError("elevations_m must be finite")
        if not (cell_size_m > 0 and np.isfinite(cell_size_m)):
            raise ValueError("cell_size_m must be positive and finite")
        self.cell_size_m = float(cell_size_m)
        self.elevations_m = elevations
        self.elevations_m.flags.writeable = False
        self.rows, self.cols = elevations.shape

    @property
    def extent_x_m(self) -> float:
        return (self.cols - 1) * self.cell_size_m

    @property
    def extent_y_m(self) -> float:
        return (self.rows - 1) * self.cell_size_m

    @property
    def area_ha(self) -> float:
        return self.extent_x_m * self.extent_y_m / 10_000.0


@dataclass(frozen=True)
class PointLight:
    position_m: tuple[float, float, float]
    color: tuple[float, float, float]
    intensity: float

    def __post_init__(self) -> None:
        if self.intensity < 0:
            raise ValueError("point light intensity must be >= 0")


@dataclass(frozen=True)
class Lighting:
    """Directional sun + ambient sky + optional point lights."""

    sun_direction: tuple[float, float, float] = (0.3, 0.2, 0.9327379053088816)
    sun_intensity: float = 1.0
    ambient_intensity: float = 0.25
    point_lights: tuple[PointLight, ...] = ()

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.sun_direction))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"sun_direction must be unit-norm (got |d|={norm:.8f})")
        if self.sun_intensity < 0 or self.ambient_intensity < 0:
            raise ValueError("light intensities must be >= 0")


# Named sun presets: direction (unit), intensity, sky color. "Weather" is
# the fog density plus one of these.
LIGHTING_PRESETS = {
    "noon": {
        "sun_direction": (0.3420201433256688, 0.0, 0.9396926207859084),
        "sun_intensity": 1.0,
        "ambient_intensity": 0.30,
        "sky_color": (0.53, 0.70, 0.92),
    },
    "sunset": {
        "sun_direction": (0.984807753012208, 0.0, 0.17364817766693033),
        "sun_intensity": 0.65,
        "ambient_intensity": 0.18,
        "sky_color": (0.93, 0.60, 0.38),
    },
    "overcast": {
        "sun_direction": (0.0, 0.0, 1.0),
        "sun_intensity": 0.35,
        "ambient_intensity": 0.45,
        "sky_color": (0.72, 0.74, 0.78),
    },
}


@dataclass(frozen=True)
class TerrainParams:
    extent_m: float = 100.0
    cell_size_m: float = 1.0
    amplitude_m: float = 4.0
    octaves: int = 4
    base_frequency: float = 0.02

    def __post_init__(self) -> None:
        if not (self.extent_m > 0 and np.isfinite(self.extent_m)):
            raise ValueError("extent_m must be positive and finite")
        if not (self.cell_size_m > 0 and np.isfinite(self.cell_size_m)):
            raise ValueError("cell_size_m must be positive and finite")
        if self.octaves < 1:
            raise ValueError("octaves must be >= 1")
        if self.amplitude_m < 0:
            raise ValueError("amplitude_m must be >= 0")


@dataclass(frozen=True)
class SceneConfig:
    """Everything that determines one generated world."""

    master_seed: int = 0
    terrain: TerrainParams = field(default_factory=TerrainParams)
    tree_density_per_ha: float = 200.0
    min_spacing_m: float = 1.5
    species_weights: tuple[float, ...] = ()
    lighting: Lighting = field(default_factory=Lighting)
    fog_density: float = 0.0
    sky_color: tuple[float, float, float] = (0.53, 0.70, 0.92)

    def __post_init__(self) -> None:
        if self.tree_density_per_ha < 0:
            raise ValueError("tree_density_per_ha must be >= 0")
        if self.min_spacing_m <= 0:
            raise ValueError("min_spacing_m must be > 0")
        weights = self.species_weights or tuple([1.0] * len(SPECIES_LIBRARY))
        object.__setattr__(self, "species_weights", tuple(float(w) for w in weights))
        if len(self.species_weights) != len(SPECIES_LIBRARY):
            raise ValueError(
                f"species_weights must have {len(SPECIES_LIBRARY)} entries, "
                f"got {len(self.species_weights)}"
            )
        if any(w < 0 for w in self.species_weights):
            raise ValueError("species_weights must be non-negative")
        if self.tree_density_per_ha > 0 and sum(self.species_weights) <= 0:
            raise ValueError("species_weights must sum > 0 when density > 0")
        if self.fog_density < 0:
            raise ValueError("fog_density must be >= 0")


@dataclass(frozen=True)
class CameraIntrinsics:
    width_px: int
    height_px: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be > 0")
        if not (0 <= self.cx < self.width_px and 0 <= self.cy < self.height_px):
            raise ValueError("principal point must lie inside the image")

    @staticmethod
    def from_hfov(width_px: int, height_px: int, hfov_deg: float) -> "CameraIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view."""
        f = width_px / (2.0 * np.tan(np.radians(hfov_deg) / 2.0))
        return CameraIntrinsics(width_px, height_px, f, f, width_px / 2.0, height_px / 2.0)


@dataclass(frozen=True)
class Pose:
    """World-from-camera rigid transform; quaternion is (w, x, y, z)."""

    position_m: tuple[float, float, float]
    orientation: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.orientation))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"orientation quaternion must be unit-norm (|q|={norm:.2e})")


def _species(name, radius, taper, heights, branches, bfrac, crown, bark, leaf):
    return SpeciesSpec(name, radius, taper, heights, branches, bfrac, crown, bark, leaf)


# 19 species presets. Trunk/crown parameters are plausible hand-tuned values,
# not measured allometry.
SPECIES_LIBRARY: tuple[SpeciesSpec, ...] = (
    _species("bucida_buceras", 0.28, 1.10, (8.0, 16.0), (4, 9), 0.22, (3.2, 3.2, 2.2), (0.35, 0.28, 0.22), (0.18, 0.34, 0.12)),
    _species("conocarpus_erectus", 0.22, 0.95, (6.0, 12.0), (3, 8), 0.25, (2.6, 2.6, 2.4), (0.42, 0.36, 0.30), (0.22, 0.38, 0.16)),
    _species("eucalyptus_gunnii", 0.30, 1.35, (12.0, 24.0), (3, 7), 0.18, (2.8, 2.8, 3.4), (0.55, 0.50, 0.44), (0.30, 0.42, 0.28)),
    _species("melia_azedarach", 0.26, 1.05, (7.0, 14.0), (4, 9), 0.24, (3.4, 3.4, 2.4), (0.38, 0.30, 0.24), (0.24, 0.40, 0.14)),
    _species("populus_alba", 0.27, 1.25, (12.0, 22.0), (4, 8), 0.20, (2.6, 2.6, 3.6), (0.60, 0.58, 0.54), (0.32, 0.44, 0.24)),
    _species("quercus_robur", 0.42, 0.90, (14.0, 26.0), (5, 11), 0.26, (4.6, 4.6, 3.4), (0.30, 0.24, 0.18), (0.16, 0.30, 0.10)),
    _species("schinus_molle", 0.24, 1.00, (6.0, 11.0), (4, 9), 0.24, (3.0, 3.0, 2.4), (0.40, 0.32, 0.24), (0.30, 0.42, 0.18)),
    _species("tilia_cordata", 0.32, 1.10, (12.0, 22.0), (4, 9), 0.22, (3.8, 3.8, 3.2), (0.36, 0.30, 0.24), (0.22, 0.38, 0.14)),
    _species("pinus_sylvestris", 0.30, 1.45, (14.0, 28.0), (3, 6), 0.16, (2.4, 2.4, 3.0), (0.48, 0.30, 0.18), (0.12, 0.26, 0.12)),
    _species("picea_abies", 0.32, 1.55, (16.0, 30.0), (3, 6), 0.15, (2.2, 2.2, 4.2), (0.34, 0.24, 0.18), (0.10, 0.24, 0.11)),
    _species("betula_pendula", 0.20, 1.30, (10.0, 20.0), (3, 7), 0.18, (2.2, 2.2, 3.0), (0.82, 0.80, 0.76), (0.28, 0.42, 0.18)),
    _species("fagus_sylvatica", 0.38, 0.95, (15.0, 28.0), (4, 10), 0.24, (4.2, 4.2, 3.4), (0.46, 0.42, 0.36), (0.20, 0.36, 0.12)),
    _species("acer_pseudoplatanus", 0.34, 1.05, (12.0, 24.0), (4, 9), 0.23, (3.8, 3.8, 3.0), (0.40, 0.34, 0.28), (0.24, 0.40, 0.16)),
    _species("fraxinus_excelsior", 0.33, 1.15, (14.0, 26.0), (4, 8), 0.21, (3.4, 3.4, 3.2), (0.44, 0.40, 0.34), (0.26, 0.40, 0.18)),
    _species("larix_decidua", 0.28, 1.50, (14.0, 27.0), (3, 6), 0.16, (2.4, 2.4, 3.6), (0.42, 0.30, 0.22), (0.26, 0.38, 0.16)),
    _species("salix_alba", 0.30, 1.00, (8.0, 16.0), (5, 10), 0.25, (3.6, 3.6, 2.8), (0.48, 0.42, 0.34), (0.34, 0.46, 0.24)),
    _species("ulmus_glabra", 0.36, 1.00, (13.0, 24.0), (4, 9), 0.24, (4.0, 4.0, 3.2), (0.38, 0.32, 0.26), (0.20, 0.36, 0.12)),
    _species("carpinus_betulus", 0.26, 1.05, (9.0, 18.0), (4, 9), 0.23, (3.2, 3.2, 2.8), (0.50, 0.46, 0.40), (0.22, 0.38, 0.14)),
    _species("juglans_regia", 0.35, 0.95, (10.0, 20.0), (4, 9), 0.25, (4.2, 4.2, 3.0), (0.36, 0.28, 0.22), (0.24, 0.38, 0.14)),
)

SPECIES_COUNT = len(SPECIES_LIBRARY)
