"""
Surface and boundary geometry queries.

This module holds the immutable mixed-codimension scene (triangles, polyline
segments and oriented points) and the Dirichlet boundary description. Both answer
closest-point queries through a kd-tree over primitive centers with exact
per-primitive distances.

Classes:
- ClosestPointHit / ClosestPointBatch: Results of closest-point and ray queries.
- Frame: Unoriented normal or tangent direction at a hit.
- SurfaceScene: Triangles, segments and oriented points sharing one vertex array.
- DirichletBoundary: Boundary points or polylines with one- or two-sided values.

Functions:
- closest_point, frame_at, interpolate, ray_intersect, closest_boundary_point:
  Single-query wrappers over the batched methods.
- project_tangent: Remove the normal part of vectors (or keep the tangent part on curves).
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import trimesh
from scipy.spatial import cKDTree

from app.errors import BoundaryError, GeometryError
from app.utils import get_logger

geometry_logger = get_logger("geometry_logger", "geometry.log")

TRIANGLE, SEGMENT, POINT = 0, 1, 2

# Dimension of the surface patch a primitive kind samples.
_PATCH_DIM = np.array([2, 1, 2])

# Upper bound on candidate pairs evaluated at once.
_MAX_PAIRS = 250_000

_RAY_CHUNK = 512


@dataclass(frozen=True)
class Frame:
    """Unoriented direction at a surface point: a normal (surfaces) or a tangent (curves)."""

    kind: str
    direction: np.ndarray


@dataclass(frozen=True)
class ClosestPointHit:
    """
    Single closest-point result.

    `local_coords` holds the interpolation weights of the primitive's vertices:
    barycentric for triangles, (1 - t, t, 0) for segments and (1, 0, 0) for points.
    `patch_dim` is 2 for triangles and oriented points, 1 for segments and 0 for
    boundary points.
    """

    point: np.ndarray
    distance: float
    primitive_id: int
    local_coords: np.ndarray
    patch_dim: int


@dataclass(frozen=True)
class ClosestPointBatch:
    """Closest-point results for a batch of queries, one row per query."""

    points: np.ndarray
    distances: np.ndarray
    primitive_ids: np.ndarray
    local_coords: np.ndarray
    patch_dims: np.ndarray

    def __len__(self):
        return len(self.distances)

    def __getitem__(self, i):
        return ClosestPointHit(
            point=self.points[i],
            distance=float(self.distances[i]),
            primitive_id=int(self.primitive_ids[i]),
            local_coords=self.local_coords[i],
            patch_dim=int(self.patch_dims[i]),
        )

    def take(self, mask):
        """Sub-batch selected by a boolean mask or index array."""
        return ClosestPointBatch(
            points=self.points[mask],
            distances=self.distances[mask],
            primitive_ids=self.primitive_ids[mask],
            local_coords=self.local_coords[mask],
            patch_dims=self.patch_dims[mask],
        )


def _as_points(x):
    points = np.asarray(x, dtype=float)
    return points.reshape(-1, 3)


def _readonly(array):
    array.setflags(write=False)
    return array


def _normalize_rows(vectors, fallback):
    norms = np.linalg.norm(vectors, axis=1)
    out = np.tile(np.asarray(fallback, dtype=float), (len(vectors), 1))
    good = norms > 0
    out[good] = vectors[good] / norms[good, None]
    return out


class _PrimitiveIndex:
    """
    kd-tree over primitive centers with per-primitive bounding radii.

    A query first bounds the true distance from above using the few nearest
    centers; every primitive whose bounding sphere may come closer than that bound
    is then evaluated exactly.
    """

    def __init__(self, centers, radii, diagonal):
        self.centers = centers
        self.radii = radii
        self.r_max = float(radii.max()) if len(radii) else 0.0
        self.slack = 1e-9 * diagonal
        self.tree = cKDTree(centers)

    def candidates(self, X):
        """
        :param X: (m, 3) query points.
        :return: Query index and primitive id of every candidate pair.
        """
        if len(X) == 0:
            return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
        k = min(4, len(self.centers))
        d, i = self.tree.query(X, k=k)
        d = d.reshape(len(X), k)
        i = i.reshape(len(X), k)
        upper = np.min(d + self.radii[i], axis=1)
        reach = upper + self.r_max + self.slack
        lists = self.tree.query_ball_point(X, reach)
        counts = np.fromiter((len(item) for item in lists), dtype=np.intp, count=len(X))
        prim = np.concatenate([np.asarray(item, dtype=np.intp) for item in lists])
        q = np.repeat(np.arange(len(X), dtype=np.intp), counts)
        return q, prim


def _pick_nearest(q, prim, dist):
    """Index of the nearest candidate per query, ties going to the lowest primitive id."""
    order = np.lexsort((prim, dist, q))
    q_sorted = q[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = q_sorted[1:] != q_sorted[:-1]
    return order[first]


def _chunks_by_pairs(counts):
    """Split query ranges so that no chunk holds more than `_MAX_PAIRS` candidate pairs."""
    counts = np.asarray(counts)
    group = (np.cumsum(counts) - counts) // _MAX_PAIRS
    starts = np.flatnonzero(np.diff(group, prepend=-1)).tolist()
    bounds = starts + [len(counts)]
    return list(zip(bounds[:-1], bounds[1:]))


def _segment_closest(a, b, x):
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.divide(
        np.einsum("ij,ij->i", x - a, ab),
        denom,
        out=np.zeros(len(a)),
        where=denom > 0,
    )
    t = np.clip(t, 0.0, 1.0)
    return a + t[:, None] * ab, t


class SurfaceScene:
    """
    Immutable mixed-codimension surface.

    Primitive ids are ordered: triangles first, then segments, then oriented points.
    All primitives index into one shared vertex array, which is also the discrete
    interpolation basis used by the mean value filters.
    """

    def __init__(self, vertices, triangles=None, segments=None, points=None, normals=None):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(
            triangles if triangles is not None else [], dtype=np.intp
        ).reshape(-1, 3)
        segments = np.asarray(segments if segments is not None else [], dtype=np.intp).reshape(
            -1, 2
        )
        points = np.asarray(points if points is not None else [], dtype=np.intp).reshape(-1)
        normals = np.asarray(normals if normals is not None else [], dtype=float).reshape(-1, 3)

        if len(triangles) + len(segments) + len(points) == 0:
            raise GeometryError("Scene has no primitives.")
        if len(points) != len(normals):
            raise GeometryError(
                f"Oriented points need one normal each ({len(points)} points, "
                f"{len(normals)} normals)."
            )
        for name, idx in (("triangle", triangles), ("segment", segments), ("point", points)):
            if idx.size and (idx.min() < 0 or idx.max() >= len(vertices)):
                raise GeometryError(f"A {name} references a vertex outside the vertex array.")
        if not np.all(np.isfinite(vertices)):
            raise GeometryError("Vertex coordinates must be finite.")

        self.vertices = _readonly(vertices)
        self.triangles = _readonly(triangles)
        self.segments = _readonly(segments)
        self.points = _readonly(points)
        self.bbox = _readonly(np.stack([vertices.min(axis=0), vertices.max(axis=0)]))
        self.diagonal = float(np.linalg.norm(self.bbox[1] - self.bbox[0]))
        if self.diagonal <= 0:
            raise GeometryError("Scene bounding box is degenerate.")

        n_tri, n_seg, n_pt = len(triangles), len(segments), len(points)
        kind = np.concatenate(
            [
                np.full(n_tri, TRIANGLE, dtype=np.int8),
                np.full(n_seg, SEGMENT, dtype=np.int8),
                np.full(n_pt, POINT, dtype=np.int8),
            ]
        )
        prim_vertices = np.concatenate(
            [
                triangles,
                np.column_stack([segments, segments[:, 0]]),
                np.repeat(points[:, None], 3, axis=1),
            ]
        ).astype(np.intp)

        corners = vertices[prim_vertices]
        # Segment and point rows repeat a vertex, so the mean is taken per kind.
        centers = np.empty((len(kind), 3))
        centers[:n_tri] = corners[:n_tri].mean(axis=1)
        centers[n_tri : n_tri + n_seg] = corners[n_tri : n_tri + n_seg, :2].mean(axis=1)
        centers[n_tri + n_seg :] = corners[n_tri + n_seg :, 0]
        radii = np.max(np.linalg.norm(corners - centers[:, None, :], axis=2), axis=1)

        face_normals = np.cross(
            corners[:n_tri, 1] - corners[:n_tri, 0], corners[:n_tri, 2] - corners[:n_tri, 0]
        )
        tangents = corners[n_tri : n_tri + n_seg, 1] - corners[n_tri : n_tri + n_seg, 0]
        directions = np.concatenate(
            [
                _normalize_rows(face_normals, (0.0, 0.0, 1.0)),
                _normalize_rows(tangents, (1.0, 0.0, 0.0)),
                _normalize_rows(normals, (0.0, 0.0, 1.0)),
            ]
        )

        self._kind = _readonly(kind)
        self._prim_vertices = _readonly(prim_vertices)
        self._directions = _readonly(directions)
        self._index = _PrimitiveIndex(centers, radii, self.diagonal)

        geometry_logger.info(
            "Scene built: %d vertices, %d triangles, %d segments, %d oriented points.",
            len(vertices),
            n_tri,
            n_seg,
            n_pt,
        )

    @property
    def vertex_count(self):
        return len(self.vertices)

    @property
    def primitive_count(self):
        return len(self._kind)

    @property
    def center(self):
        return self.bbox.mean(axis=0)

    def primitive_kinds(self):
        """Kind tag (TRIANGLE, SEGMENT, POINT) of every primitive."""
        return self._kind

    def _exact(self, X, q, prim):
        """Exact closest points of `X[q]` on primitives `prim`."""
        k = len(q)
        kind = self._kind[prim]
        pts = np.empty((k, 3))
        coords = np.zeros((k, 3))
        xq = X[q]

        m = kind == TRIANGLE
        if m.any():
            tri_xyz = self.vertices[self._prim_vertices[prim[m]]]
            cp = trimesh.triangles.closest_point(tri_xyz, xq[m])
            bad = ~np.all(np.isfinite(cp), axis=1)
            if bad.any():
                # Degenerate faces fall back to their nearest corner.
                d = np.linalg.norm(tri_xyz[bad] - xq[m][bad][:, None, :], axis=2)
                cp[bad] = tri_xyz[bad][np.arange(bad.sum()), d.argmin(axis=1)]
            with np.errstate(divide="ignore", invalid="ignore"):
                bary = trimesh.triangles.points_to_barycentric(tri_xyz, cp)
            bary = np.clip(np.nan_to_num(bary, nan=1.0 / 3.0), 0.0, 1.0)
            total = bary.sum(axis=1, keepdims=True)
            bary = np.where(total > 0, bary / np.where(total > 0, total, 1.0), 1.0 / 3.0)
            pts[m] = cp
            coords[m] = bary

        m = kind == SEGMENT
        if m.any():
            ends = self.vertices[self._prim_vertices[prim[m], :2]]
            cp, t = _segment_closest(ends[:, 0], ends[:, 1], xq[m])
            pts[m] = cp
            coords[m, 0] = 1.0 - t
            coords[m, 1] = t

        m = kind == POINT
        if m.any():
            pts[m] = self.vertices[self._prim_vertices[prim[m], 0]]
            coords[m, 0] = 1.0

        dist = np.linalg.norm(xq - pts, axis=1)
        return pts, coords, dist

    def _resolve(self, X, q, prim):
        pts, coords, dist = self._exact(X, q, prim)
        pick = _pick_nearest(q, prim, dist)
        ids = prim[pick]
        return ClosestPointBatch(
            points=pts[pick],
            distances=dist[pick],
            primitive_ids=ids,
            local_coords=coords[pick],
            patch_dims=_PATCH_DIM[self._kind[ids]],
        )

    def closest_points(self, X, exhaustive=False):
        """
        Nearest surface point of every query.

        :param X: (m, 3) query points (a single 3-vector is accepted).
        :param exhaustive: Scan every primitive instead of the kd-tree candidates.
        :return: ClosestPointBatch with one row per query.
        """
        X = _as_points(X)
        if len(X) == 0:
            return ClosestPointBatch(
                np.empty((0, 3)),
                np.empty(0),
                np.empty(0, dtype=np.intp),
                np.empty((0, 3)),
                np.empty(0, dtype=np.intp),
            )
        n_prim = self.primitive_count
        if exhaustive:
            counts = np.full(len(X), n_prim)
        else:
            q_all, prim_all = self._index.candidates(X)
            counts = np.bincount(q_all, minlength=len(X))
            offsets = np.concatenate([[0], np.cumsum(counts)])

        parts = []
        for lo, hi in _chunks_by_pairs(counts):
            if exhaustive:
                q = np.repeat(np.arange(lo, hi, dtype=np.intp), n_prim)
                prim = np.tile(np.arange(n_prim, dtype=np.intp), hi - lo)
            else:
                q = q_all[offsets[lo] : offsets[hi]]
                prim = prim_all[offsets[lo] : offsets[hi]]
            parts.append(self._resolve(X, q, prim))
        if len(parts) == 1:
            return parts[0]
        return ClosestPointBatch(
            points=np.concatenate([p.points for p in parts]),
            distances=np.concatenate([p.distances for p in parts]),
            primitive_ids=np.concatenate([p.primitive_ids for p in parts]),
            local_coords=np.concatenate([p.local_coords for p in parts]),
            patch_dims=np.concatenate([p.patch_dims for p in parts]),
        )

    def frames(self, batch):
        """Unit frame direction (normal or tangent) of the primitive behind each hit."""
        return self._directions[batch.primitive_ids]

    def basis(self, batch):
        """
        Interpolation basis of each hit.

        :return: (vertex indices (m, 3), weights (m, 3)); weights sum to 1 per row.
        """
        return self._prim_vertices[batch.primitive_ids], batch.local_coords

    def interpolate(self, batch, vertex_values):
        """
        Blend per-vertex values with the hit weights.

        :param batch: ClosestPointBatch (or a single ClosestPointHit).
        :param vertex_values: (vertex_count,) or (vertex_count, C) array.
        :return: (m,) or (m, C) interpolated values.
        """
        values = np.asarray(vertex_values, dtype=float)
        if len(values) != self.vertex_count:
            raise GeometryError(
                f"Expected {self.vertex_count} vertex values, got {len(values)}."
            )
        if isinstance(batch, ClosestPointHit):
            idx = self._prim_vertices[batch.primitive_id]
            return np.tensordot(batch.local_coords, values[idx], axes=(0, 0))
        idx, weights = self.basis(batch)
        return np.einsum("mk,mk...->m...", weights, values[idx])

    def intersect_rays(self, origins, directions, exhaustive=False):
        """
        Nearest positive intersection of every ray with the scene's triangles.

        Segments and oriented points are not ray-intersectable.

        :param origins: (m, 3) ray origins.
        :param directions: (m, 3) unit ray directions.
        :param exhaustive: Test every triangle instead of bounding-sphere candidates.
        :return: (hit mask (m,), ClosestPointBatch of the hit rays only).
        """
        n_tri = len(self.triangles)
        if n_tri == 0:
            raise GeometryError("Scene has no ray-intersectable primitives.")
        origins = _as_points(origins)
        directions = _as_points(directions)
        tri_xyz = self.vertices[self.triangles]
        centers = self._index.centers[:n_tri]
        radii = self._index.radii[:n_tri] + self._index.slack

        best_t = np.full(len(origins), np.inf)
        best_prim = np.full(len(origins), -1, dtype=np.intp)
        best_uv = np.zeros((len(origins), 2))

        lo_box, hi_box = self.bbox
        chunk = max(1, min(_RAY_CHUNK, _MAX_PAIRS // n_tri))
        for start in range(0, len(origins), chunk):
            o = origins[start : start + chunk]
            d = directions[start : start + chunk]
            if exhaustive:
                q, prim = np.nonzero(np.ones((len(o), n_tri), dtype=bool))
            else:
                live = _ray_hits_box(o, d, lo_box, hi_box)
                rel = centers[None, :, :] - o[:, None, :]
                along = np.einsum("rtk,rk->rt", rel, d)
                perp2 = np.einsum("rtk,rtk->rt", rel, rel) - along**2
                near = (perp2 <= radii[None, :] ** 2) & (along + radii[None, :] > 0)
                near &= live[:, None]
                q, prim = np.nonzero(near)
            if len(q) == 0:
                continue
            t, u, v, ok = _moller_trumbore(o[q], d[q], tri_xyz[prim])
            q, prim, t, u, v = q[ok], prim[ok], t[ok], u[ok], v[ok]
            if len(q) == 0:
                continue
            pick = _pick_nearest(q, prim, t)
            rows = start + q[pick]
            best_t[rows] = t[pick]
            best_prim[rows] = prim[pick]
            best_uv[rows, 0] = u[pick]
            best_uv[rows, 1] = v[pick]

        mask = best_prim >= 0
        t = best_t[mask]
        uv = best_uv[mask]
        hits = ClosestPointBatch(
            points=origins[mask] + t[:, None] * directions[mask],
            distances=t,
            primitive_ids=best_prim[mask],
            local_coords=np.column_stack([1.0 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]]),
            patch_dims=np.full(int(mask.sum()), 2, dtype=np.intp),
        )
        return mask, hits


def _ray_hits_box(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    t1 = np.nan_to_num(t1, nan=-np.inf)
    t2 = np.nan_to_num(t2, nan=np.inf)
    t_near = np.max(np.minimum(t1, t2), axis=1)
    t_far = np.min(np.maximum(t1, t2), axis=1)
    return (t_far >= np.maximum(t_near, 0.0))


def _moller_trumbore(o, d, tri, eps=1e-12):
    """Vectorized ray/triangle test. Returns (t, u, v, valid)."""
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    p = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > eps
    inv = np.divide(1.0, det, out=np.zeros_like(det), where=ok)
    s = o - tri[:, 0]
    u = np.einsum("ij,ij->i", s, p) * inv
    qv = np.cross(s, e1)
    v = np.einsum("ij,ij->i", d, qv) * inv
    t = np.einsum("ij,ij->i", e2, qv) * inv
    ok &= (u >= 0) & (v >= 0) & (u + v <= 1) & (t > eps)
    return t, u, v, ok


def project_tangent(vectors, directions, patch_dims):
    """
    Tangential part of vectors.

    On surfaces (patch_dim 2) the normal component is removed; on curves
    (patch_dim 1) only the component along the tangent is kept.
    """
    vectors = np.asarray(vectors, dtype=float)
    along = np.einsum("ij,ij->i", vectors, directions)[:, None] * directions
    curve = (np.asarray(patch_dims) == 1)[:, None]
    return np.where(curve, along, vectors - along)


def closest_point(scene, x):
    """Nearest point of `scene` to the 3-vector `x`."""
    return scene.closest_points(x)[0]


def frame_at(scene, hit):
    """Normal frame on triangles and oriented points, tangent frame on segments."""
    direction = scene._directions[hit.primitive_id]  # pylint: disable=protected-access
    kind = "tangent" if hit.patch_dim == 1 else "normal"
    return Frame(kind=kind, direction=direction.copy())


def interpolate(scene, hit, vertex_values):
    """Interpolate per-vertex values at a single hit or a batch of hits."""
    return scene.interpolate(hit, vertex_values)


def ray_intersect(scene, origin, direction):
    """Nearest positive intersection of one ray, or None."""
    mask, hits = scene.intersect_rays(origin, direction)
    return hits[0] if mask[0] else None


@dataclass(frozen=True)
class BoundaryQuery:
    """
    Closest boundary points of a batch of walker positions.

    `tangents` is set for curve boundaries. `surface_frames` and `surface_patch_dims`
    describe the scene at the boundary points when a scene was supplied.
    """

    hits: ClosestPointBatch
    values: np.ndarray
    tangents: Optional[np.ndarray]
    surface_frames: Optional[np.ndarray] = None
    surface_patch_dims: Optional[np.ndarray] = None


class DirichletBoundary:
    """
    Lower-dimensional Dirichlet boundary: points on curves or polylines on surfaces.

    Values are stored per boundary vertex as an (n, C) array and blended linearly
    along segments. `values_other` gives the second side of a two-sided boundary:
    for curves the side is sign(((x - c) x t) . n) with n the surface normal at c;
    for points it is sign((x - p) . o) with the per-point `orientations` o. The
    positive side takes `values`, the negative side `values_other` and points exactly
    on the boundary take the average.
    """

    def __init__(
        self,
        vertices,
        values,
        segments=None,
        values_other=None,
        orientations=None,
    ):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        if len(vertices) == 0:
            raise BoundaryError("Boundary has no vertices.")
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            values = np.full(len(vertices), float(values))
        if len(values) != len(vertices):
            raise BoundaryError(
                f"Boundary values must have one row per vertex ({len(values)} for "
                f"{len(vertices)} vertices)."
            )
        values = values.reshape(len(vertices), -1)
        self.channels = values.shape[1]

        if values_other is not None:
            values_other = np.asarray(values_other, dtype=float)
            if values_other.size != values.size:
                raise BoundaryError("values_other must match the shape of values.")
            values_other = values_other.reshape(values.shape)

        if segments is not None and len(segments):
            segments = np.asarray(segments, dtype=np.intp).reshape(-1, 2)
            if segments.min() < 0 or segments.max() >= len(vertices):
                raise BoundaryError("A boundary segment references a missing vertex.")
            self.kind = "curve"
        else:
            segments = np.empty((0, 2), dtype=np.intp)
            self.kind = "points"

        if self.kind == "points" and values_other is not None:
            if orientations is None:
                raise BoundaryError("Two-sided point boundaries need per-point orientations.")
            orientations = _normalize_rows(
                np.asarray(orientations, dtype=float).reshape(-1, 3), (1.0, 0.0, 0.0)
            )
            if len(orientations) != len(vertices):
                raise BoundaryError("Need one orientation per boundary point.")
        else:
            orientations = None

        self.vertices = _readonly(vertices)
        self.segments = _readonly(segments)
        self.values = _readonly(values)
        self.values_other = _readonly(values_other) if values_other is not None else None
        self.orientations = _readonly(orientations) if orientations is not None else None

        if self.kind == "curve":
            ends = vertices[segments]
            centers = ends.mean(axis=1)
            radii = 0.5 * np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
            self._tangents = _readonly(_normalize_rows(ends[:, 1] - ends[:, 0], (1.0, 0.0, 0.0)))
        else:
            centers = vertices.copy()
            radii = np.zeros(len(vertices))
            self._tangents = None
        extent = np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0))
        self._index = _PrimitiveIndex(centers, radii, max(extent, 1.0))

    @property
    def two_sided(self):
        return self.values_other is not None

    def select_channel(self, channel):
        """Single-channel copy of the boundary."""
        other = None if self.values_other is None else self.values_other[:, channel]
        return DirichletBoundary(
            self.vertices,
            self.values[:, channel],
            segments=self.segments if self.kind == "curve" else None,
            values_other=other,
            orientations=self.orientations,
        )

    def with_values(self, values, values_other=None):
        """Same geometry carrying different values."""
        return DirichletBoundary(
            self.vertices,
            values,
            segments=self.segments if self.kind == "curve" else None,
            values_other=values_other,
            orientations=self.orientations,
        )

    def _exact(self, X, q, prim):
        xq = X[q]
        if self.kind == "curve":
            ends = self.vertices[self.segments[prim]]
            pts, t = _segment_closest(ends[:, 0], ends[:, 1], xq)
            coords = np.column_stack([1.0 - t, t, np.zeros_like(t)])
        else:
            pts = self.vertices[prim]
            coords = np.zeros((len(prim), 3))
            coords[:, 0] = 1.0
        return pts, coords, np.linalg.norm(xq - pts, axis=1)

    def closest(self, X, exhaustive=False):
        """
        Nearest boundary element of every query.

        :return: ClosestPointBatch (patch_dim 1 for curves, 0 for points).
        """
        X = _as_points(X)
        n_elem = len(self.segments) if self.kind == "curve" else len(self.vertices)
        if exhaustive:
            q = np.repeat(np.arange(len(X), dtype=np.intp), n_elem)
            prim = np.tile(np.arange(n_elem, dtype=np.intp), len(X))
        else:
            q, prim = self._index.candidates(X)
        pts, coords, dist = self._exact(X, q, prim)
        pick = _pick_nearest(q, prim, dist)
        ids = prim[pick]
        return ClosestPointBatch(
            points=pts[pick],
            distances=dist[pick],
            primitive_ids=ids,
            local_coords=coords[pick],
            patch_dims=np.full(len(ids), 1 if self.kind == "curve" else 0, dtype=np.intp),
        )

    def _blend(self, table, hits):
        if self.kind == "curve":
            ends = self.segments[hits.primitive_ids]
            w = hits.local_coords
            return w[:, 0:1] * table[ends[:, 0]] + w[:, 1:2] * table[ends[:, 1]]
        return table[hits.primitive_ids]

    def locate(self, X, scene=None, exhaustive=False):
        """
        Closest boundary point, boundary value and local frames of every query.

        Two-sided curve boundaries need `scene` for the surface normal of the side test.
        """
        X = _as_points(X)
        hits = self.closest(X, exhaustive=exhaustive)
        values = self._blend(self.values, hits)
        tangents = self._tangents[hits.primitive_ids] if self.kind == "curve" else None

        surface_frames = surface_dims = None
        if scene is not None:
            surface_hits = scene.closest_points(hits.points)
            surface_frames = scene.frames(surface_hits)
            surface_dims = surface_hits.patch_dims

        if self.values_other is not None:
            offset = X - hits.points
            if self.kind == "curve":
                if surface_frames is None:
                    raise BoundaryError("Two-sided curve boundaries need the scene normal.")
                side = np.einsum("ij,ij->i", np.cross(offset, tangents), surface_frames)
            else:
                side = np.einsum("ij,ij->i", offset, self.orientations[hits.primitive_ids])
            other = self._blend(self.values_other, hits)
            sign = np.sign(side)[:, None]
            values = np.where(sign > 0, values, np.where(sign < 0, other, 0.5 * (values + other)))

        return BoundaryQuery(
            hits=hits,
            values=values,
            tangents=tangents,
            surface_frames=surface_frames,
            surface_patch_dims=surface_dims,
        )


def closest_boundary_point(boundary, x, scene=None):
    """
    Nearest boundary point of one query.

    :return: (ClosestPointHit, value array of length C, tangent Frame or None).
    """
    located = boundary.locate(x, scene=scene)
    tangent = None
    if located.tangents is not None:
        tangent = Frame(kind="tangent", direction=located.tangents[0].copy())
    return located.hits[0], located.values[0], tangent
