"""
Surface diffusion curves.

Colors given on (optionally two-sided) boundary curves diffuse over the surface
as solutions of the Laplace equation, one channel at a time.

- render_diffusion_curves: Evaluate the solution only where camera rays hit the
  surface (jittered rays per pixel, background for misses).
- solve_diffusion_on_vertices: Cheap per-vertex estimate refined by the mean
  value filter.
- write_image: Linear colors to sRGB, written through Pillow (PNG or binary PPM).
"""

import os
from typing import List

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, field_validator

from app.services.filtering import FilterOptions, apply_filter, build_filter
from app.services.solver import (
    SourceTerm,
    WalkContext,
    build_atlas,
    estimate_batch,
    point_rng,
)
from app.utils import get_logger

apps_logger = get_logger("apps_logger", "apps.log")

STREAM_CAMERA = 20
STREAM_RENDER = 30
STREAM_VERTICES = 40


class CameraConfig(BaseModel):
    position: List[float] = [0.0, 0.0, 4.0]
    look_at: List[float] = [0.0, 0.0, 0.0]
    up: List[float] = [0.0, 1.0, 0.0]
    fov: float = Field(default=45.0, gt=0, lt=180)
    width: int = Field(default=64, ge=1)
    height: int = Field(default=48, ge=1)
    samples_per_pixel: int = Field(default=1, ge=1)
    background: List[float] = [1.0, 1.0, 1.0]

    @field_validator("position", "look_at", "up", "background")
    @classmethod
    def three_components(cls, value):
        if len(value) != 3:
            raise ValueError("expected three components")
        return value


def camera_rays(camera, rng):
    """
    Jittered primary rays, samples_per_pixel per pixel, row-major from the top-left pixel.

    :return: (origins, directions), each (height * width * spp, 3).
    """
    position = np.asarray(camera.position, dtype=float)
    forward = np.asarray(camera.look_at, dtype=float) - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(camera.up, dtype=float))
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    h, w, spp = camera.height, camera.width, camera.samples_per_pixel
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    rows = np.repeat(rows.ravel(), spp) + rng.random(h * w * spp)
    cols = np.repeat(cols.ravel(), spp) + rng.random(h * w * spp)
    half = np.tan(np.radians(camera.fov) / 2.0)
    sx = (2.0 * cols / w - 1.0) * half * (w / h)
    sy = (1.0 - 2.0 * rows / h) * half
    directions = forward + sx[:, None] * right + sy[:, None] * up
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return np.broadcast_to(position, directions.shape).copy(), directions


def _laplace_context(scene, boundary, cfg, feature_size):
    return WalkContext(
        scene=scene,
        boundary=boundary,
        feature_size=feature_size,
        config=cfg.model_copy(update={"n_volume": 0, "sigma": 0.0}),
        source=SourceTerm.none(),
    )


def render_diffusion_curves(scene, curves, camera, cfg, feature_size=None):
    """
    View-dependent solve: PDE work is spent only on visible surface points.

    :param scene: Ray-intersectable SurfaceScene.
    :param curves: DirichletBoundary with one value per channel (e.g. RGB).
    :param camera: CameraConfig.
    :param cfg: SolverConfig (N_V and σ are forced to 0).
    :return: (height, width, C) linear image.
    """
    feature_size = feature_size if feature_size is not None else build_atlas(scene, cfg)
    rng = point_rng(cfg.seed, 0, STREAM_CAMERA)
    origins, directions = camera_rays(camera, rng)
    mask, hits = scene.intersect_rays(origins, directions)

    channels = curves.channels
    background = np.resize(np.asarray(camera.background, dtype=float), channels)
    samples = np.tile(background, (len(origins), 1))
    if mask.any():
        for channel in range(channels):
            ctx = _laplace_context(scene, curves.select_channel(channel), cfg, feature_size)
            est = estimate_batch(ctx, hits.points, stream=STREAM_RENDER + channel)
            samples[mask, channel] = est.mean[:, 0]

    image = samples.reshape(camera.height, camera.width, camera.samples_per_pixel, channels)
    apps_logger.info(
        "Rendered %dx%d image (%d of %d rays hit).",
        camera.width,
        camera.height,
        int(mask.sum()),
        len(mask),
    )
    return image.mean(axis=2)


def solve_diffusion_on_vertices(scene, curves, cfg, options=None, feature_size=None):
    """
    Per-vertex colors: initial_paths walks per vertex, then the mean value filter.

    :return: (n, C) vertex values.
    """
    options = options or FilterOptions()
    feature_size = feature_size if feature_size is not None else build_atlas(scene, cfg)
    ctx = _laplace_context(scene, curves, cfg, feature_size)
    initial = estimate_batch(ctx, scene.vertices, stream=STREAM_VERTICES, n_paths=options.initial_paths)
    if options.iterations == 0:
        return initial.mean
    op = build_filter(ctx, scene.vertices, options.n_filter_samples)
    return apply_filter(op, initial.mean, options.iterations)


def linear_to_srgb(image):
    """Standard sRGB transfer curve on values clipped to [0, 1]."""
    x = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1.0 / 2.4) - 0.055)


def write_image(path, image):
    """
    Write a linear image as 8-bit sRGB. The format follows the extension (.png or .ppm).
    """
    encoded = np.round(linear_to_srgb(image) * 255.0).astype(np.uint8)
    if encoded.ndim == 3 and encoded.shape[2] == 1:
        encoded = encoded[:, :, 0]
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    extension = os.path.splitext(path)[1].lower()
    image_format = "PPM" if extension in (".ppm", ".pnm") else "PNG"
    Image.fromarray(encoded).save(path, format=image_format)
    apps_logger.info("Wrote %s.", path)
