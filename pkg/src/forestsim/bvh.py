"""Bounding-volume hierarchy over a labeled triangle soup.

Median-split binary BVH built once per scene; traversal kernels are
numba-compiled with the GIL released so the renderer can run disjoint pixel
bands on worker threads. The nearest-hit rule is the lexicographic minimum
of (t, triangle_index), which makes BVH results bit-identical to the
brute-force reference no matter the traversal order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .treegen import TreeMesh

_LEAF_SIZE = 4


@dataclass
class TriangleSoup:
    """Flattened scene geometry plus per-triangle attributes."""

    p0: np.ndarray            # (m,3) first vertex
    e1: np.ndarray            # (m,3) edge p1-p0
    e2: np.ndarray            # (m,3) edge p2-p0
    normals: np.ndarray       # (m,3) unit geometric normals
    instance_ids: np.ndarray  # (m,) uint32, 0 = terrain/background
    labels: np.ndarray        # (m,) uint8 semantic codes
    albedo: np.ndarray        # (m,3) float64 surface albedo

    @property
    def count(self) -> int:
        return len(self.p0)


def make_soup(vertices: np.ndarray, triangles: np.ndarray,
              instance_ids: np.ndarray, labels: np.ndarray,
              albedo: np.ndarray) -> TriangleSoup:
    v = np.asarray(vertices, dtype=np.float64)
    t = np.asarray(triangles, dtype=np.int64)
    p0 = v[t[:, 0]]
    p1 = v[t[:, 1]]
    p2 = v[t[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    n = np.cross(e1, e2)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return TriangleSoup(
        p0=p0, e1=e1, e2=e2, normals=n / norm,
        instance_ids=np.asarray(instance_ids, dtype=np.uint32),
        labels=np.asarray(labels, dtype=np.uint8),
        albedo=np.asarray(albedo, dtype=np.float64),
    )


def concat_soups(soups) -> TriangleSoup:
    return TriangleSoup(
        p0=np.vstack([s.p0 for s in soups]),
        e1=np.vstack([s.e1 for s in soups]),
        e2=np.vstack([s.e2 for s in soups]),
        normals=np.vstack([s.normals for s in soups]),
        instance_ids=np.concatenate([s.instance_ids for s in soups]),
        labels=np.concatenate([s.labels for s in soups]),
        albedo=np.vstack([s.albedo for s in soups]),
    )


@njit(nogil=True, cache=True, error_model="numpy")
def _ray_tri_t(ox, oy, oz, dx, dy, dz, p0, e1, e2, i):
    """Moller-Trumbore, two-sided. Returns hit distance or inf."""
    hx = dy * e2[i, 2] - dz * e2[i, 1]
    hy = dz * e2[i, 0] - dx * e2[i, 2]
    hz = dx * e2[i, 1] - dy * e2[i, 0]
    a = e1[i, 0] * hx + e1[i, 1] * hy + e1[i, 2] * hz
    if -1e-12 < a < 1e-12:
        return np.inf
    f = 1.0 / a
    sx = ox - p0[i, 0]
    sy = oy - p0[i, 1]
    sz = oz - p0[i, 2]
    u = f * (sx * hx + sy * hy + sz * hz)
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = sy * e1[i, 2] - sz * e1[i, 1]
    qy = sz * e1[i, 0] - sx * e1[i, 2]
    qz = sx * e1[i, 1] - sy * e1[i, 0]
    v = f * (dx * qx + dy * qy + dz * qz)
    if v < 0.0 or u + v > 1.0:
        return np.inf
    return f * (e2[i, 0] * qx + e2[i, 1] * qy + e2[i, 2] * qz)


@njit(nogil=True, cache=True, error_model="numpy")
def _slab_hit(nmin, nmax, node, ox, oy, oz, dx, dy, dz, t_lo, t_hi):
    """Ray/AABB entry distance, or inf when the slab interval is empty."""
    tnear = t_lo
    tfar = t_hi
    for axis in range(3):
        if axis == 0:
            o, d = ox, dx
        elif axis == 1:
            o, d = oy, dy
        else:
            o, d = oz, dz
        lo = nmin[node, axis]
        hi = nmax[node, axis]
        if -1e-300 < d < 1e-300:
            if o < lo or o > hi:
                return np.inf
        else:
            inv = 1.0 / d
            ta = (lo - o) * inv
            tb = (hi - o) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > tnear:
                tnear = ta
            if tb < tfar:
                tfar = tb
            if tnear > tfar:
                return np.inf
    return tnear


@njit(nogil=True, cache=True, error_model="numpy")
def closest_hit_kernel(nmin, nmax, nleft, ncount, order, p0, e1, e2,
                       origins, dirs, t_min, out_t, out_idx, lo, hi):
    """Nearest hit for rays [lo, hi); lexicographic (t, index) minimum."""
    stack = np.empty(128, dtype=np.int64)
    for r in range(lo, hi):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        best_t = np.inf
        best_i = -1
        top = 0
        stack[top] = 0
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _slab_hit(nmin, nmax, node, ox, oy, oz, dx, dy, dz, t_min, best_t) == np.inf:
                continue
            if ncount[node] > 0:
                first = nleft[node]
                for j in range(first, first + ncount[node]):
                    tri = order[j]
                    t = _ray_tri_t(ox, oy, oz, dx, dy, dz, p0, e1, e2, tri)
                    if t >= t_min:
                        if t < best_t or (t == best_t and tri < best_i):
                            best_t = t
                            best_i = tri
            else:
                left = nleft[node]
                tl = _slab_hit(nmin, nmax, left, ox, oy, oz, dx, dy, dz, t_min, best_t)
                tr = _slab_hit(nmin, nmax, left + 1, ox, oy, oz, dx, dy, dz, t_min, best_t)
                # push the farther child first so the nearer is explored next
                if tl <= tr:
                    if tr != np.inf:
                        stack[top] = left + 1
                        top += 1
                    if tl != np.inf:
                        stack[top] = left
                        top += 1
                else:
                    stack[top] = left
                    top += 1
                    stack[top] = left + 1
                    top += 1
        out_t[r] = best_t
        out_idx[r] = best_i


@njit(nogil=True, cache=True, error_model="numpy")
def any_hit_kernel(nmin, nmax, nleft, ncount, order, p0, e1, e2,
                   origins, dirs, t_min, t_max, out_hit, lo, hi):
    """Occlusion query: any intersection with t in [t_min, t_max)."""
    stack = np.empty(128, dtype=np.int64)
    for r in range(lo, hi):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        hit = False
        top = 0
        stack[top] = 0
        top += 1
        while top > 0 and not hit:
            top -= 1
            node = stack[top]
            if _slab_hit(nmin, nmax, node, ox, oy, oz, dx, dy, dz, t_min, t_max) == np.inf:
                continue
            if ncount[node] > 0:
                first = nleft[node]
                for j in range(first, first + ncount[node]):
                    t = _ray_tri_t(ox, oy, oz, dx, dy, dz, p0, e1, e2, order[j])
                    if t_min <= t < t_max:
                        hit = True
                        break
            else:
                left = nleft[node]
                stack[top] = left
                top += 1
                stack[top] = left + 1
                top += 1
        out_hit[r] = hit


@njit(nogil=True, cache=True, error_model="numpy")
def brute_force_kernel(p0, e1, e2, origins, dirs, t_min, out_t, out_idx, lo, hi):
    """Reference nearest hit: test every triangle, same tie rule."""
    m = p0.shape[0]
    for r in range(lo, hi):
        ox = origins[r, 0]
        oy = origins[r, 1]
        oz = origins[r, 2]
        dx = dirs[r, 0]
        dy = dirs[r, 1]
        dz = dirs[r, 2]
        best_t = np.inf
        best_i = -1
        for i in range(m):
            t = _ray_tri_t(ox, oy, oz, dx, dy, dz, p0, e1, e2, i)
            if t >= t_min:
                if t < best_t or (t == best_t and i < best_i):
                    best_t = t
                    best_i = i
        out_t[r] = best_t
        out_idx[r] = best_i


class BVH:
    """Binary BVH; build once, query from any number of threads."""

    def __init__(self, soup: TriangleSoup):
        if soup.count == 0:
            raise ValueError("cannot build a BVH over zero triangles")
        self.soup = soup
        p1 = soup.p0 + soup.e1
        p2 = soup.p0 + soup.e2
        tri_min = np.minimum(np.minimum(soup.p0, p1), p2)
        tri_max = np.maximum(np.maximum(soup.p0, p1), p2)
        centroids = (tri_min + tri_max) * 0.5

        m = soup.count
        order = np.arange(m, dtype=np.int64)
        max_nodes = 2 * ((m + _LEAF_SIZE - 1) // _LEAF_SIZE) + 1
        nmin = np.empty((2 * m + 2, 3), dtype=np.float64)
        nmax = np.empty_like(nmin)
        nleft = np.zeros(2 * m + 2, dtype=np.int64)
        ncount = np.zeros(2 * m + 2, dtype=np.int64)
        del max_nodes

        n_nodes = 1
        stack = [(0, m, 0)]
        while stack:
            start, end, node = stack.pop()
            idx = order[start:end]
            nmin[node] = tri_min[idx].min(axis=0)
            nmax[node] = tri_max[idx].max(axis=0)
            extent = centroids[idx].max(axis=0) - centroids[idx].min(axis=0)
            if end - start <= _LEAF_SIZE or extent.max() <= 0.0:
                nleft[node] = start
                ncount[node] = end - start
                continue
            axis = int(np.argmax(extent))
            local = np.argsort(centroids[idx, axis], kind="stable")
            order[start:end] = idx[local]
            mid = start + (end - start) // 2
            left = n_nodes
            n_nodes += 2
            nleft[node] = left
            ncount[node] = 0
            stack.append((mid, end, left + 1))
            stack.append((start, mid, left))

        self.node_min = nmin[:n_nodes].copy()
        self.node_max = nmax[:n_nodes].copy()
        self.node_left = nleft[:n_nodes].copy()
        self.node_count = ncount[:n_nodes].copy()
        self.order = order

    def closest(self, origins: np.ndarray, dirs: np.ndarray,
                t_min: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit per ray: (t, triangle index), inf/-1 on miss."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = len(origins)
        out_t = np.empty(n, dtype=np.float64)
        out_idx = np.empty(n, dtype=np.int64)
        closest_hit_kernel(self.node_min, self.node_max, self.node_left,
                           self.node_count, self.order,
                           self.soup.p0, self.soup.e1, self.soup.e2,
                           origins, dirs, t_min, out_t, out_idx, 0, n)
        return out_t, out_idx

    def occluded(self, origins: np.ndarray, dirs: np.ndarray,
                 t_min: float = 1e-6, t_max: float = np.inf) -> np.ndarray:
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = len(origins)
        out = np.zeros(n, dtype=np.bool_)
        any_hit_kernel(self.node_min, self.node_max, self.node_left,
                       self.node_count, self.order,
                       self.soup.p0, self.soup.e1, self.soup.e2,
                       origins, dirs, t_min, t_max, out, 0, n)
        return out

    def closest_brute_force(self, origins: np.ndarray, dirs: np.ndarray,
                            t_min: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
        """Oracle path: identical intersection math over all triangles."""
        origins = np.ascontiguousarray(origins, dtype=np.float64)
        dirs = np.ascontiguousarray(dirs, dtype=np.float64)
        n = len(origins)
        out_t = np.empty(n, dtype=np.float64)
        out_idx = np.empty(n, dtype=np.int64)
        brute_force_kernel(self.soup.p0, self.soup.e1, self.soup.e2,
                           origins, dirs, t_min, out_t, out_idx, 0, n)
        return out_t, out_idx


def tree_mesh_soup(mesh: TreeMesh, bark_albedo, leaf_albedo) -> TriangleSoup:
    """Soup for one tree; trunk and branches share the bark albedo."""
    m = len(mesh.triangles)
    albedo = np.empty((m, 3), dtype=np.float64)
    from .treegen import PartLabel
    albedo[:] = bark_albedo
    albedo[mesh.labels == PartLabel.LEAF] = leaf_albedo
    inst = np.full(m, mesh.instance_id, dtype=np.uint32)
    return make_soup(mesh.vertices, mesh.triangles, inst, mesh.labels, albedo)


def build_bvh(soups) -> BVH:
    """BVH over the concatenated scene geometry (terrain + trees)."""
    return BVH(concat_soups(list(soups)))
