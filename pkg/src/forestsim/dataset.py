"""Dataset generation pipeline, stats and preview composition.

Directory layout:
    <out>/{rgb,depth,instance,semantic,lidar}/<seq>_<frame>.<ext>
    <out>/annotations/{train,test}.json
    <out>/poses/<seq>.json
    <out>/manifest.json   (config echo + per-tree ground truth; written last)
"""

from __future__ import annotations

import colorsys
import json
from pathlib import Path

import numpy as np

from . import __version__
from .annotate import CocoDataset, coco_to_json, export_coco, extract_instances, split_dataset
from .config import RunConfig, resolve_trajectory
from .core import SPECIES_LIBRARY
from .formats import (read_pfm, read_png, write_pfm, write_ply, write_png_gray,
                      write_png_gray16, write_png_rgb)
from .math3d import pose_matrix
from .sensors import Scene, assemble_scene, render_sequence
from .treegen import BREAST_HEIGHT_M, compute_dbh, draw_height_m

MODALITY_DIRS = ("rgb", "depth", "instance", "semantic", "lidar")


def tree_ground_truth(scene: Scene) -> list[dict]:
    records = []
    for inst in scene.placement.trees:
        spec = SPECIES_LIBRARY[inst.species_index]
        height = draw_height_m(spec, inst)
        dbh = compute_dbh(spec, inst) if height > BREAST_HEIGHT_M else None
        records.append({
            "instance_id": inst.instance_id,
            "species_index": inst.species_index,
            "species": spec.name,
            "position_xy_m": [float(inst.position_xy_m[0]), float(inst.position_xy_m[1])],
            "base_elevation_m": float(inst.base_elevation_m),
            "yaw_rad": float(inst.yaw_rad),
            "scale": float(inst.scale),
            "seed": int(inst.seed),
            "height_m": float(height),
            "dbh_m": float(dbh) if dbh is not None else None,
        })
    return records


def generate_dataset(cfg: RunConfig, out_dir, threads: int = 1) -> dict:
    """Render every trajectory, write all modalities and annotations.

    Returns the manifest document.
    """
    out = Path(out_dir)
    for sub in MODALITY_DIRS + ("annotations", "poses"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    scene = assemble_scene(cfg.scene, cfg.radial_segments, threads=threads)
    species_lookup = {t.instance_id: t.species_index
                      for t in scene.placement.trees}

    frames: list[tuple[dict, list]] = []
    image_id = 0
    for spec in cfg.trajectories:
        traj = resolve_trajectory(spec, scene.terrain)
        pose_records = []
        for k, (frame, scan) in enumerate(
                render_sequence(scene, traj, cfg.intrinsics, cfg.lidar)):
            stem = f"{spec.name}_{k:05d}"
            write_png_rgb(out / "rgb" / f"{stem}.png", frame.rgb)
            write_pfm(out / "depth" / f"{stem}.pfm", frame.depth_m)
            write_png_gray16(out / "instance" / f"{stem}.png", frame.instance)
            write_png_gray(out / "semantic" / f"{stem}.png", frame.semantic)
            write_ply(out / "lidar" / f"{stem}.ply", scan.xyz, scan.instance_ids,
                      scan.ring_index, scan.azimuth_rad)
            image_id += 1
            meta = {
                "id": image_id,
                "file_name": f"rgb/{stem}.png",
                "width": cfg.intrinsics.width_px,
                "height": cfg.intrinsics.height_px,
                "sequence": spec.name,
            }
            anns = extract_instances(frame.instance, cfg.min_area_px,
                                     image_id=image_id,
                                     species_lookup=species_lookup)
            frames.append((meta, anns))
            pose_records.append({
                "frame": k,
                "file_stem": stem,
                "timestamp_s": frame.timestamp_s,
                "world_from_camera": [
                    [float(v) for v in row]
                    for row in pose_matrix(frame.pose.position_m,
                                           frame.pose.orientation)
                ],
            })
        poses_doc = {
            "sequence": spec.name,
            "frame_rate_hz": spec.frame_rate_hz,
            "intrinsics": {
                "width_px": cfg.intrinsics.width_px,
                "height_px": cfg.intrinsics.height_px,
                "fx": cfg.intrinsics.fx, "fy": cfg.intrinsics.fy,
                "cx": cfg.intrinsics.cx, "cy": cfg.intrinsics.cy,
            },
            "frames": pose_records,
        }
        with open(out / "poses" / f"{spec.name}.json", "w") as fh:
            json.dump(poses_doc, fh, separators=(",", ":"))

    doc = export_coco(frames)
    dataset = CocoDataset(images=doc["images"], annotations=doc["annotations"],
                          categories=doc["categories"])
    train, test = split_dataset(dataset, cfg.test_fraction, cfg.split_seed)
    for name, part in (("train", train), ("test", test)):
        with open(out / "annotations" / f"{name}.json", "w") as fh:
            fh.write(coco_to_json({"images": part.images,
                                   "annotations": part.annotations,
                                   "categories": part.categories}))

    manifest = {
        "tool": "forestsim",
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.raw,
        "frames": len(frames),
        "sequences": [spec.name for spec in cfg.trajectories],
        "trees": tree_ground_truth(scene),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, separators=(",", ":"))
    return manifest


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(str(path))
    return path


def dataset_stats(dataset_dir) -> dict:
    """Frame/instance counts, species histogram, area quantiles, DBH stats."""
    root = Path(dataset_dir)
    with open(_require(root / "manifest.json")) as fh:
        manifest = json.load(fh)
    images = []
    annotations = []
    for split in ("train", "test"):
        with open(_require(root / "annotations" / f"{split}.json")) as fh:
            doc = json.load(fh)
        images.extend(doc["images"])
        annotations.extend(doc["annotations"])

    species_hist = {s.name: 0 for s in SPECIES_LIBRARY}
    for tree in manifest["trees"]:
        species_hist[tree["species"]] += 1

    areas = sorted(a["area"] for a in annotations)
    if areas:
        qs = np.quantile(np.asarray(areas, dtype=np.float64), [0.0, 0.25, 0.5, 0.75, 1.0])
        area_quantiles = {q: float(v) for q, v in zip(("min", "p25", "p50", "p75", "max"), qs)}
    else:
        area_quantiles = {q: 0.0 for q in ("min", "p25", "p50", "p75", "max")}

    dbhs = [t["dbh_m"] for t in manifest["trees"] if t["dbh_m"] is not None]
    if dbhs:
        arr = np.asarray(dbhs)
        dbh_stats = {"count": len(dbhs), "mean": float(arr.mean()),
                     "min": float(arr.min()), "max": float(arr.max())}
    else:
        dbh_stats = {"count": 0, "mean": 0.0, "min": 0.0, "max": 0.0}

    return {
        "frames": len(images),
        "instances": len(annotations),
        "trees": len(manifest["trees"]),
        "species_histogram": species_hist,
        "instance_area_quantiles": area_quantiles,
        "dbh_m": dbh_stats,
    }


def stats_text(stats: dict) -> str:
    lines = [
        f"frames: {stats['frames']}",
        f"annotated instances: {stats['instances']}",
        f"placed trees: {stats['trees']}",
        "instance area quantiles (px): "
        + ", ".join(f"{k}={v:.0f}" for k, v in stats["instance_area_quantiles"].items()),
        f"dbh: n={stats['dbh_m']['count']} mean={stats['dbh_m']['mean']:.3f} m "
        f"range=[{stats['dbh_m']['min']:.3f}, {stats['dbh_m']['max']:.3f}]",
        "species histogram:",
    ]
    for name, count in stats["species_histogram"].items():
        if count:
            lines.append(f"  {name}: {count}")
    return "\n".join(lines)


_DEPTH_STOPS = np.array([
    (0.00, 13, 8, 135), (0.25, 126, 3, 168), (0.50, 204, 71, 120),
    (0.75, 248, 149, 64), (1.00, 240, 249, 33),
])

SEMANTIC_PALETTE = {
    0: (120, 170, 230),  # sky
    1: (101, 67, 33),    # terrain
    2: (204, 102, 0),    # trunk
    3: (230, 180, 60),   # branch
    4: (60, 140, 60),    # leaf
}


def depth_colormap(depth: np.ndarray) -> np.ndarray:
    out = np.zeros(depth.shape + (3,), dtype=np.uint8)
    hit = depth > 0
    if not hit.any():
        return out
    t = depth[hit] / depth[hit].max()
    stops = _DEPTH_STOPS[:, 0]
    rgb = np.empty((t.size, 3))
    for c in range(3):
        rgb[:, c] = np.interp(t, stops, _DEPTH_STOPS[:, c + 1])
    out[hit] = rgb.round().astype(np.uint8)
    return out


def instance_overlay(rgb: np.ndarray, instance: np.ndarray,
                     alpha: float = 0.55) -> np.ndarray:
    """Blend a distinct hue per instance id over the RGB frame."""
    out = rgb.astype(np.float64).copy()
    for inst_id in np.unique(instance):
        if inst_id == 0:
            continue
        hue = (int(inst_id) * 0.6180339887498949) % 1.0
        color = np.array(colorsys.hsv_to_rgb(hue, 0.9, 1.0)) * 255.0
        mask = instance == inst_id
        out[mask] = (1.0 - alpha) * out[mask] + alpha * color
    return out.round().astype(np.uint8)


def semantic_palette_image(semantic: np.ndarray) -> np.ndarray:
    out = np.zeros(semantic.shape + (3,), dtype=np.uint8)
    for code, color in SEMANTIC_PALETTE.items():
        out[semantic == code] = color
    return out


def compose_preview(dataset_dir, frame_stem: str) -> np.ndarray:
    """2x2 tile: RGB | instance overlay | depth colormap | semantic palette."""
    root = Path(dataset_dir)
    rgb = read_png(_require(root / "rgb" / f"{frame_stem}.png"))
    instance = read_png(_require(root / "instance" / f"{frame_stem}.png"))
    depth = read_pfm(_require(root / "depth" / f"{frame_stem}.pfm"))
    semantic = read_png(_require(root / "semantic" / f"{frame_stem}.png"))
    h, w = semantic.shape
    tile = np.zeros((2 * h, 2 * w, 3), dtype=np.uint8)
    tile[:h, :w] = rgb
    tile[:h, w:] = instance_overlay(rgb, instance)
    tile[h:, :w] = depth_colormap(depth)
    tile[h:, w:] = semantic_palette_image(semantic)
    return tile
