"""forestsim: procedural virtual-forest synthesis with pixel-aligned
multi-modal ground truth (RGB, metric depth, trunk instances, semantics,
LiDAR), COCO annotation export and an mAP@50 benchmark harness."""

__version__ = "0.1.0"

from .core import (CameraIntrinsics, Lighting, PointLight, Pose, SceneConfig,
                   SpeciesSpec, Terrain, TerrainParams, TreeInstance,
                   SPECIES_LIBRARY, derive_rng)
from .procgen import PlacementResult, generate_terrain, place_trees, sample_height, sample_species
from .treegen import PartLabel, TreeMesh, build_tree_mesh, compute_dbh, tree_aabb, write_obj
from .bvh import BVH, build_bvh, make_soup
from .sensors import (FrameBundle, LidarScan, Scene, Trajectory, assemble_scene,
                      interpolate_pose, render_frame, render_sequence, simulate_lidar)
from .annotate import (CocoDataset, InstanceAnnotation, extract_instances,
                       export_coco, fill_polygons, split_dataset)
from .evalkit import Detection, EvalReport, compute_ap, evaluate, iou_bbox, iou_mask

__all__ = [
    "CameraIntrinsics", "Lighting", "PointLight", "Pose", "SceneConfig",
    "SpeciesSpec", "Terrain", "TerrainParams", "TreeInstance", "SPECIES_LIBRARY",
    "derive_rng", "PlacementResult", "generate_terrain", "place_trees",
    "sample_height", "sample_species", "PartLabel", "TreeMesh", "build_tree_mesh",
    "compute_dbh", "tree_aabb", "write_obj", "BVH", "build_bvh", "make_soup",
    "FrameBundle", "LidarScan", "Scene", "Trajectory", "assemble_scene",
    "interpolate_pose", "render_frame", "render_sequence", "simulate_lidar",
    "CocoDataset", "InstanceAnnotation", "extract_instances", "export_coco",
    "fill_polygons", "split_dataset", "Detection", "EvalReport", "compute_ap",
    "evaluate", "iou_bbox", "iou_mask",
]
