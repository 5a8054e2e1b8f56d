"""
Medial axis point cloud and local feature size.

Seeds scattered around the scene are projected onto it; from every foot point a
tangent ball is shrunk on both sides until its center's closest surface point is
the foot again. Each pair is shifted to the smaller radius, contained balls are
pruned after scaling by s, and the surviving centers answer conservative local
feature size queries.

Classes:
- MedialBall: One shrunk ball (center, radius, foot, side).
- MedialAtlas: Pruned centers with a kd-tree and the λ floor.
- ConstantFeatureSize: Fixed local feature size with the same query interface.

Functions:
- scatter_seeds, termination_tolerance, shrink_ball, shrink_balls, prune,
  prune_indices, extract_atlas, local_feature_size.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from app.errors import MedialAxisError
from app.services.geometry import POINT
from app.services.kernels import random_directions
from app.utils import get_logger

medial_logger = get_logger("medial_logger", "medial.log")

DEFAULT_SCALE = 1.15
CONSERVATIVE_FACTOR = 0.9
MAX_SHRINK_ITERATIONS = 50


@dataclass(frozen=True)
class MedialBall:
    center: np.ndarray
    radius: float
    foot: np.ndarray
    side: int


class MedialAtlas:
    """
    Pruned medial ball centers.

    local_feature_size(x) = max(λ, conservative_factor × distance to the nearest center).
    """

    def __init__(self, centers, radii, lam, conservative_factor=CONSERVATIVE_FACTOR):
        centers = np.asarray(centers, dtype=float).reshape(-1, 3)
        if len(centers) == 0:
            raise MedialAxisError("Medial atlas needs at least one center.")
        if lam <= 0:
            raise MedialAxisError("The local feature size floor must be positive.")
        self.centers = centers
        self.radii = np.asarray(radii, dtype=float).reshape(len(centers))
        self.lam = float(lam)
        self.conservative_factor = float(conservative_factor)
        self._tree = cKDTree(centers)

    def __len__(self):
        return len(self.centers)

    def nearest_center_distance(self, points):
        distances, _ = self._tree.query(np.asarray(points, dtype=float).reshape(-1, 3))
        return distances

    def local_feature_size(self, points):
        """Conservative local feature size at each of the (m, 3) points."""
        scaled = self.conservative_factor * self.nearest_center_distance(points)
        return np.maximum(self.lam, scaled)

    def summary(self):
        return {
            "centers": len(self.centers),
            "radius_min": float(self.radii.min()),
            "radius_max": float(self.radii.max()),
            "lambda": self.lam,
            "conservative_factor": self.conservative_factor,
        }


class ConstantFeatureSize:
    """Forced local feature size, used in place of an atlas by step-count studies."""

    def __init__(self, value):
        if value <= 0:
            raise MedialAxisError("Local feature size must be positive.")
        self.value = float(value)

    def local_feature_size(self, points):
        return np.full(len(np.asarray(points).reshape(-1, 3)), self.value)

    def summary(self):
        return {"constant": self.value}


def scatter_seeds(scene, count, rng):
    """
    Uniform points in the ball of radius diag/2 around the bounding box center.

    :param count: Number of seeds (>= 1).
    :return: (count, 3) points.
    """
    if count < 1:
        raise MedialAxisError("Seed count must be at least 1.")
    radius = 0.5 * scene.diagonal
    rho = radius * np.cbrt(rng.random(count))
    return scene.center + rho[:, None] * random_directions(rng, count)


def termination_tolerance(scene):
    """
    Distance below which a shrinking ball counts as converged.

    1e-4 of the diagonal for meshes and polylines; twice the median neighbour spacing
    when the scene carries oriented points.
    """
    point_mask = scene.primitive_kinds() == POINT
    if point_mask.sum() >= 2:
        samples = scene.vertices[scene.points]
        distances, _ = cKDTree(samples).query(samples, k=2)
        return max(2.0 * float(np.median(distances[:, 1])), 1e-4 * scene.diagonal)
    return 1e-4 * scene.diagonal


def shrink_balls(scene, feet, directions, initial_radius, tol=None, max_iter=MAX_SHRINK_ITERATIONS):
    """
    Shrink tangent balls at many feet at once.

    Each ball is tangent at its foot p with center p + r d. While the center's
    closest surface point q differs from p, the radius becomes
    |q - p|² / (2 (q - p)·d), the radius of the ball through p and q.

    :return: (radii (m,), converged mask (m,)).
    """
    feet = np.asarray(feet, dtype=float).reshape(-1, 3)
    directions = np.asarray(directions, dtype=float).reshape(-1, 3)
    tol = termination_tolerance(scene) if tol is None else tol
    radii = np.full(len(feet), float(initial_radius))
    done = np.zeros(len(feet), dtype=bool)

    for _ in range(max_iter):
        active = np.flatnonzero(~done)
        if len(active) == 0:
            break
        p = feet[active]
        d = directions[active]
        r = radii[active]
        q = scene.closest_points(p + r[:, None] * d).points
        qp = q - p
        dist = np.linalg.norm(qp, axis=1)
        denom = 2.0 * np.einsum("ij,ij->i", qp, d)
        settled = (dist < tol) | (denom <= 0)
        new_r = np.where(settled, r, np.divide(dist**2, denom, out=r.copy(), where=~settled))
        settled |= np.abs(new_r - r) < tol
        radii[active] = new_r
        done[active[settled]] = True
    return radii, done


def shrink_ball(scene, foot, direction, initial_radius, tol=None, max_iter=MAX_SHRINK_ITERATIONS):
    """
    Shrink one tangent ball.

    :return: MedialBall, or None when the iteration cap is reached.
    """
    radii, done = shrink_balls(scene, foot, direction, initial_radius, tol, max_iter)
    if not done[0]:
        return None
    foot = np.asarray(foot, dtype=float).reshape(3)
    direction = np.asarray(direction, dtype=float).reshape(3)
    return MedialBall(center=foot + radii[0] * direction, radius=float(radii[0]), foot=foot, side=1)


def prune_indices(centers, radii, s):
    """
    Indices of the balls surviving scaled-containment pruning.

    Balls are ordered by descending radius (stable); ball i is removed when an
    earlier ball j satisfies s r_i + |x_i - x_j| <= s r_j. Containment is
    transitive, so testing against every earlier ball equals testing against the
    survivors.
    """
    if s <= 1:
        raise MedialAxisError("The pruning scale s must be greater than 1.")
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    radii = np.asarray(radii, dtype=float).reshape(len(centers))
    if len(centers) == 0:
        return np.empty(0, dtype=np.intp)
    order = np.argsort(-radii, kind="stable")
    rank = np.empty(len(order), dtype=np.intp)
    rank[order] = np.arange(len(order))
    tree = cKDTree(centers)
    reach = s * (radii.max() - radii)
    removed = np.zeros(len(centers), dtype=bool)
    tiny = 1e-12 * max(float(radii.max()), 1.0)

    for start in range(0, len(centers), 2048):
        rows = np.arange(start, min(start + 2048, len(centers)))
        lists = tree.query_ball_point(centers[rows], reach[rows] + tiny)
        counts = np.fromiter((len(item) for item in lists), dtype=np.intp, count=len(rows))
        if counts.sum() == 0:
            continue
        i = np.repeat(rows, counts)
        j = np.concatenate([np.asarray(item, dtype=np.intp) for item in lists])
        d = np.linalg.norm(centers[i] - centers[j], axis=1)
        contained = (rank[j] < rank[i]) & (s * radii[i] + d <= s * radii[j] + tiny)
        removed[np.unique(i[contained])] = True

    keep = order[~removed[order]]
    return keep


def prune(balls, s=DEFAULT_SCALE):
    """Scaled-containment pruning of MedialBall objects, returned in descending radius order."""
    if not balls:
        return []
    centers = np.array([b.center for b in balls])
    radii = np.array([b.radius for b in balls])
    return [balls[i] for i in prune_indices(centers, radii, s)]


def extract_atlas(
    scene,
    seed_count=100_000,
    s=DEFAULT_SCALE,
    lam=None,
    rng=None,
    conservative_factor=CONSERVATIVE_FACTOR,
):
    """
    Build the medial atlas of a scene.

    :param seed_count: Number of scattered seeds.
    :param s: Pruning scale (> 1).
    :param lam: Local feature size floor; defaults to 1% of the bounding box diagonal.
    :param rng: numpy Generator.
    :return: MedialAtlas.
    """
    if s <= 1:
        raise MedialAxisError("The pruning scale s must be greater than 1.")
    lam = 0.01 * scene.diagonal if lam is None else float(lam)
    if lam <= 0:
        raise MedialAxisError("The local feature size floor must be positive.")
    rng = np.random.default_rng() if rng is None else rng

    seeds = scatter_seeds(scene, seed_count, rng)
    hits = scene.closest_points(seeds)
    offsets = seeds - hits.points
    lengths = np.linalg.norm(offsets, axis=1)
    on_points = scene.primitive_kinds()[hits.primitive_ids] == POINT
    tol = termination_tolerance(scene)
    usable = on_points | (lengths > tol)

    directions = np.zeros_like(offsets)
    directions[usable & ~on_points] = (
        offsets[usable & ~on_points] / lengths[usable & ~on_points, None]
    )
    directions[on_points] = scene.frames(hits)[on_points]
    feet = hits.points[usable]
    directions = directions[usable]

    both_feet = np.concatenate([feet, feet])
    both_dirs = np.concatenate([directions, -directions])
    radii, done = shrink_balls(scene, both_feet, both_dirs, scene.diagonal, tol=tol)
    m = len(feet)
    ok = done[:m] & done[m:]
    if not ok.any():
        raise MedialAxisError("Every shrinking ball failed to converge.")

    # Both balls of a pair take the smaller radius.
    r_min = np.minimum(radii[:m], radii[m:])[ok]
    feet_ok = feet[ok]
    dirs_ok = directions[ok]
    centers = np.concatenate([feet_ok + r_min[:, None] * dirs_ok, feet_ok - r_min[:, None] * dirs_ok])
    ball_radii = np.concatenate([r_min, r_min])

    keep = prune_indices(centers, ball_radii, s)
    medial_logger.info(
        "Medial atlas: %d seeds, %d converged pairs, %d balls kept (s=%.3f, lambda=%.4g).",
        seed_count,
        int(ok.sum()),
        len(keep),
        s,
        lam,
    )
    return MedialAtlas(centers[keep], ball_radii[keep], lam, conservative_factor)


def local_feature_size(atlas, x):
    """Local feature size at a single point."""
    return float(atlas.local_feature_size(np.asarray(x, dtype=float).reshape(1, 3))[0])
