"""Instance-raster to COCO annotation conversion.

Each distinct nonzero instance id becomes ONE annotation: exact bbox and
pixel-count area, plus one Moore-traced boundary polygon per 8-connected
visible fragment (occlusion can split a tree into several), and one inner
boundary polygon per enclosed hole so even-odd refill reproduces the mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import derive_rng

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)

# Moore neighborhood in clockwise order starting east: (dx, dy)
_MOORE = ((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1))


@dataclass
class InstanceAnnotation:
    annotation_id: int
    image_id: int
    category_id: int
    bbox: tuple[int, int, int, int]      # x, y, w, h — tight pixel bound
    area_px: int                         # exact pixel count
    polygons: list[list[float]]          # flattened [x1,y1,x2,y2,...] per contour
    species_id: int = -1
    iscrowd: int = 0

    def __post_init__(self) -> None:
        if self.bbox[2] <= 0 or self.bbox[3] <= 0 or self.area_px <= 0:
            raise ValueError("annotation must cover at least one pixel")
        if any(len(p) < 6 for p in self.polygons):
            raise ValueError("every polygon needs >= 3 vertices")


@dataclass
class CocoDataset:
    images: list[dict] = field(default_factory=list)
    annotations: list[dict] = field(default_factory=list)
    categories: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        image_ids = [im["id"] for im in self.images]
        if len(set(image_ids)) != len(image_ids):
            raise ValueError("duplicate image ids")
        ann_ids = [a["id"] for a in self.annotations]
        if len(set(ann_ids)) != len(ann_ids):
            raise ValueError("duplicate annotation ids")
        known = set(image_ids)
        for a in self.annotations:
            if a["image_id"] not in known:
                raise ValueError(f"annotation {a['id']} references unknown image")


def moore_trace(mask: np.ndarray, start_rc: tuple[int, int],
                backtrack_rc: tuple[int, int]) -> list[tuple[int, int]]:
    """Moore-neighbor boundary following with Jacob's stopping criterion.

    Walks the foreground boundary starting at start_rc, where backtrack_rc
    is the background neighbor the trace conceptually entered from (it only
    anchors the scan direction and may lie outside the raster). Returns
    (x, y) pixel coordinates of the closed contour.
    """
    h, w = mask.shape
    state0 = (tuple(start_rc), tuple(backtrack_rc))
    cur, back = state0
    contour: list[tuple[int, int]] = []
    seen: set = set()
    while True:
        contour.append((cur[1], cur[0]))
        if (cur, back) in seen:  # safety net: deterministic cycle reached
            contour.pop()
            return contour
        seen.add((cur, back))
        cr, cc = cur
        br, bc = back
        start_k = _MOORE.index((bc - cc, br - cr))
        nxt = new_back = None
        for off in range(1, 9):
            k = (start_k + off) % 8
            dx, dy = _MOORE[k]
            nr, nc = cr + dy, cc + dx
            if 0 <= nr < h and 0 <= nc < w and mask[nr, nc]:
                # backtrack = the neighbor scanned just before the hit
                pdx, pdy = _MOORE[(k - 1) % 8]
                nxt = (nr, nc)
                new_back = (cr + pdy, cc + pdx)
                break
        if nxt is None:
            return contour  # isolated pixel
        if (nxt, new_back) == state0:
            return contour  # re-entering the start the same way: closed
        cur, back = nxt, new_back


def _outer_contour(mask: np.ndarray) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(mask)  # raster order: entry 0 is the first pixel
    r, c = int(rows[0]), int(cols[0])
    return moore_trace(mask, (r, c), (r, c - 1))


def _hole_contours(comp: np.ndarray) -> list[list[tuple[int, int]]]:
    """Inner boundary (on component pixels) around each enclosed hole."""
    filled = ndimage.binary_fill_holes(comp)
    holes = filled & ~comp
    if not holes.any():
        return []
    labeled, n = ndimage.label(holes)  # 4-connected background duality
    contours = []
    for hole_id in range(1, n + 1):
        rows, cols = np.nonzero(labeled == hole_id)
        hr, hc = int(rows[0]), int(cols[0])
        # pixel above the raster-first hole pixel is component foreground
        contours.append(moore_trace(comp, (hr - 1, hc), (hr, hc)))
    return contours


def _as_flat_polygon(points: list[tuple[int, int]]) -> list[float]:
    while len(points) < 3:  # degenerate single/double pixel contour
        points = points + [points[-1]]
    out: list[float] = []
    for x, y in points:
        out.append(float(x))
        out.append(float(y))
    return out


def extract_instances(instance_raster: np.ndarray, min_area_px: int = 16,
                      image_id: int = 0,
                      species_lookup: dict[int, int] | None = None
                      ) -> list[InstanceAnnotation]:
    """One annotation per distinct nonzero id in the raster.

    Fragments of one occluded instance become multiple polygons inside the
    same annotation; instances smaller than min_area_px are dropped.
    """
    raster = np.asarray(instance_raster)
    anns: list[InstanceAnnotation] = []
    ids = np.unique(raster)
    for inst_id in ids[ids != 0]:
        mask = raster == inst_id
        area = int(mask.sum())
        if area < min_area_px:
            continue
        rows, cols = np.nonzero(mask)
        x0, x1 = int(cols.min()), int(cols.max())
        y0, y1 = int(rows.min()), int(rows.max())
        labeled, n_comp = ndimage.label(mask, structure=EIGHT_CONNECTED)
        polygons: list[list[float]] = []
        for comp_id in range(1, n_comp + 1):
            comp = labeled == comp_id
            polygons.append(_as_flat_polygon(_outer_contour(comp)))
            for hole in _hole_contours(comp):
                polygons.append(_as_flat_polygon(hole))
        species_id = -1
        if species_lookup is not None:
            species_id = species_lookup.get(int(inst_id), -1)
        anns.append(InstanceAnnotation(
            annotation_id=0,  # assigned at export
            image_id=image_id,
            category_id=1,
            bbox=(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            area_px=area,
            polygons=polygons,
            species_id=species_id,
        ))
    return anns


def fill_polygons(polygons: list[list[float]], height: int, width: int) -> np.ndarray:
    """Even-odd rasterization at integer pixel centers; on-edge counts inside.

    Exact for contours with integer vertices (the tracer's output), which
    makes refilling a traced rectilinear blob lossless.
    """
    parity = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)
    for flat in polygons:
        pts = np.asarray(flat, dtype=np.float64).reshape(-1, 2)
        poly_parity = np.zeros((height, width), dtype=bool)
        k = len(pts)
        for idx in range(k):
            x1, y1 = pts[idx]
            x2, y2 = pts[(idx + 1) % k]
            _mark_on_edge(on_edge, x1, y1, x2, y2)
            if y1 == y2:
                continue
            ylo, yhi = (y1, y2) if y1 < y2 else (y2, y1)
            # half-open span [ylo, yhi) over integer scanlines
            for y in range(math.ceil(ylo), math.ceil(yhi)):
                if not 0 <= y < height:
                    continue
                x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                # ceil gives the closed-left rule: a center exactly on the
                # crossing toggles
                x_start = max(math.ceil(x_cross), 0)
                if x_start < width:
                    poly_parity[y, x_start:] ^= True
        parity ^= poly_parity
    return parity | on_edge


def _mark_on_edge(on_edge: np.ndarray, x1, y1, x2, y2) -> None:
    h, w = on_edge.shape
    if all(float(v).is_integer() for v in (x1, y1, x2, y2)):
        x1, y1, x2, y2 = int(x1), int(y1), int(x2), int(y2)
        g = math.gcd(abs(x2 - x1), abs(y2 - y1))
        if g == 0:
            if 0 <= y1 < h and 0 <= x1 < w:
                on_edge[y1, x1] = True
            return
        sx, sy = (x2 - x1) // g, (y2 - y1) // g
        for k in range(g + 1):
            x, y = x1 + k * sx, y1 + k * sy
            if 0 <= y < h and 0 <= x < w:
                on_edge[y, x] = True


def export_coco(frames: list[tuple[dict, list[InstanceAnnotation]]],
                categories: list[dict] | None = None) -> dict:
    """Assemble the COCO document; key order and number formatting are fixed
    so identical inputs serialize byte-identically."""
    categories = categories or [{"id": 1, "name": "tree"}]
    images: list[dict] = []
    annotations: list[dict] = []
    seen = set()
    next_ann_id = 1
    for meta, anns in frames:
        if meta["id"] in seen:
            raise ValueError(f"duplicate image id {meta['id']}")
        seen.add(meta["id"])
        image = {"id": meta["id"], "file_name": meta["file_name"],
                 "width": meta["width"], "height": meta["height"]}
        if "sequence" in meta:
            image["sequence"] = meta["sequence"]
        images.append(image)
        for ann in anns:
            annotations.append({
                "id": next_ann_id,
                "image_id": meta["id"],
                "category_id": ann.category_id,
                "bbox": [int(v) for v in ann.bbox],
                "area": int(ann.area_px),
                "segmentation": [[float(v) for v in poly] for poly in ann.polygons],
                "iscrowd": ann.iscrowd,
                "species_id": ann.species_id,
            })
            next_ann_id += 1
    return {"images": images, "annotations": annotations, "categories": categories}


def coco_to_json(doc: dict) -> str:
    return json.dumps(doc, separators=(",", ":"))


def coco_from_json(text: str) -> CocoDataset:
    doc = json.loads(text)
    return CocoDataset(images=doc["images"], annotations=doc["annotations"],
                       categories=doc["categories"])


def split_dataset(dataset: CocoDataset, test_fraction: float,
                  seed: int) -> tuple[CocoDataset, CocoDataset]:
    """Sequence-level train/test split.

    All frames of one trajectory stay together; the test share gets as close
    to test_fraction as whole sequences allow.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError("test_fraction must be in [0, 1]")
    sequences: dict[str, int] = {}
    for im in dataset.images:
        sequences[im.get("sequence", im["file_name"])] = 0
    for im in dataset.images:
        sequences[im.get("sequence", im["file_name"])] += 1
    names = sorted(sequences)
    rng = derive_rng(seed, "split", 0)
    order = list(rng.permutation(len(names)))
    total = len(dataset.images)
    best_k, best_err = 0, abs(0.0 - test_fraction)
    cum = 0
    for k in range(1, len(names) + 1):
        cum += sequences[names[order[k - 1]]]
        err = abs(cum / total - test_fraction)
        if err < best_err:
            best_k, best_err = k, err
    test_seqs = {names[order[i]] for i in range(best_k)}

    def subset(pred) -> CocoDataset:
        images = [im for im in dataset.images
                  if pred(im.get("sequence", im["file_name"]))]
        keep = {im["id"] for im in images}
        anns = [a for a in dataset.annotations if a["image_id"] in keep]
        return CocoDataset(images=images, annotations=anns,
                           categories=list(dataset.categories))

    return subset(lambda s: s not in test_seqs), subset(lambda s: s in test_seqs)
