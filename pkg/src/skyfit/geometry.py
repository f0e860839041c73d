"""Lat-long panorama geometry, pinhole crop extraction and angular utilities.

Conventions (used throughout the package): world frame is y-up; a lat-long
pixel (u, v) in a W x H image (W = 2H) maps to zenith angle
``theta = pi * (v + 0.5) / H`` and azimuth ``phi = 2*pi*(u + 0.5)/W - pi``,
with direction ``d = (sin(theta)sin(phi), cos(theta), sin(theta)cos(phi))``.
Azimuth wraps; zenith clamps at the poles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Panorama",
    "CameraParams",
    "pixel_to_direction",
    "direction_to_pixel",
    "pixel_grid_directions",
    "solid_angles",
    "camera_rotation",
    "extract_crop",
    "project_to_crop",
    "sample_camera",
    "angular_error",
]

ELEVATION_RANGE = (-20.0, 20.0)
AZIMUTH_RANGE = (-180.0, 180.0)
VFOV_RANGE = (35.0, 68.0)


@dataclass
class Panorama:
    """Equirectangular RGB image with an optional boolean sky mask."""

    pixels: np.ndarray                 # (H, W, 3)
    sky_mask: np.ndarray | None = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("panorama pixels must have shape (H, W, 3)")
        h, w = self.pixels.shape[:2]
        if w != 2 * h:
            raise ValueError(f"panorama must be 2:1, got {w}x{h}")
        if self.sky_mask is not None:
            self.sky_mask = np.asarray(self.sky_mask, dtype=bool)
            if self.sky_mask.shape != (h, w):
                raise ValueError("sky mask dimensions must match the image")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass
class CameraParams:
    """Pinhole camera pose and field of view for crop extraction."""

    elevation: float          # degrees, up positive
    azimuth: float            # degrees
    vfov: float               # degrees
    out_width: int = 320
    out_height: int = 240

    def __post_init__(self):
        if not ELEVATION_RANGE[0] <= self.elevation <= ELEVATION_RANGE[1]:
            raise ValueError(f"elevation {self.elevation} outside {ELEVATION_RANGE}")
        if not AZIMUTH_RANGE[0] <= self.azimuth <= AZIMUTH_RANGE[1]:
            raise ValueError(f"azimuth {self.azimuth} outside {AZIMUTH_RANGE}")
        if not VFOV_RANGE[0] <= self.vfov <= VFOV_RANGE[1]:
            raise ValueError(f"vfov {self.vfov} outside {VFOV_RANGE}")
        if self.out_width <= 0 or self.out_height <= 0:
            raise ValueError("output size must be positive")

    def to_json_dict(self):
        return {
            "elevation_deg": self.elevation,
            "azimuth_deg": self.azimuth,
            "vfov_deg": self.vfov,
            "width": self.out_width,
            "height": self.out_height,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            elevation=d["elevation_deg"],
            azimuth=d["azimuth_deg"],
            vfov=d["vfov_deg"],
            out_width=d.get("width", 320),
            out_height=d.get("height", 240),
        )


def pixel_to_direction(u, v, width, height):
    """Continuous lat-long pixel coordinates to unit directions.

    Azimuth is taken modulo the wrap; zenith is clamped to [0, pi].
    Broadcasts over array inputs; returns shape (..., 3).
    """
    if width != 2 * height:
        raise ValueError("lat-long image must satisfy W = 2H")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    phi = 2.0 * np.pi * (u + 0.5) / width - np.pi
    theta = np.clip(np.pi * (v + 0.5) / height, 0.0, np.pi)
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def direction_to_pixel(d, width, height, clamp_poles: bool = False):
    """Unit directions to continuous lat-long pixel coordinates (u, v)."""
    if width != 2 * height:
        raise ValueError("lat-long image must satisfy W = 2H")
    d = np.asarray(d, dtype=float)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.arctan2(d[..., 0], d[..., 2])
    u = (phi + np.pi) * width / (2.0 * np.pi) - 0.5
    v = theta * height / np.pi - 0.5
    if clamp_poles:
        v = np.clip(v, 0.0, height - 1.0)
    return u, v


def pixel_grid_directions(width, height, rows=None):
    """Directions at the centers of all pixels (or of the given rows)."""
    if rows is None:
        rows = np.arange(height)
    u, v = np.meshgrid(np.arange(width, dtype=float), np.asarray(rows, dtype=float))
    return pixel_to_direction(u, v, width, height)


def solid_angles(width, height, rows=None):
    """Solid angle of each pixel in the given rows, shape (n_rows, W)."""
    if rows is None:
        rows = np.arange(height)
    theta = np.pi * (np.asarray(rows, dtype=float) + 0.5) / height
    w = np.sin(theta) * (np.pi / height) * (2.0 * np.pi / width)
    return np.repeat(w[:, None], width, axis=1)


def camera_rotation(elevation_deg, azimuth_deg):
    """Camera-to-world rotation; camera frame is x-right, y-up, z-forward."""
    e = np.radians(elevation_deg)
    a = np.radians(azimuth_deg)
    ce, se = np.cos(e), np.sin(e)
    ca, sa = np.cos(a), np.sin(a)
    r_elev = np.array([[1, 0, 0], [0, ce, -se], [0, se, ce]])
    r_az = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]])
    return r_az @ r_elev


def _crop_ray_dirs(cam: CameraParams):
    tan_v = np.tan(np.radians(cam.vfov) / 2.0)
    tan_h = tan_v * cam.out_width / cam.out_height
    xs = (np.arange(cam.out_width) + 0.5) / cam.out_width * 2.0 - 1.0
    ys = 1.0 - (np.arange(cam.out_height) + 0.5) / cam.out_height * 2.0
    x, y = np.meshgrid(xs * tan_h, ys * tan_v)
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    return rays @ camera_rotation(cam.elevation, cam.azimuth).T


def bilinear_sample(pixels: np.ndarray, u, v):
    """Bilinear sample with azimuthal wrap in u and clamp in v."""
    h, w = pixels.shape[:2]
    u = np.asarray(u, dtype=float)
    v = np.clip(np.asarray(v, dtype=float), 0.0, h - 1.0)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    fu = u - u0
    fv = v - v0
    u0w = np.mod(u0, w)
    u1w = np.mod(u0 + 1, w)
    v1 = np.minimum(v0 + 1, h - 1)
    p00 = pixels[v0, u0w]
    p01 = pixels[v0, u1w]
    p10 = pixels[v1, u0w]
    p11 = pixels[v1, u1w]
    fu = fu[..., None]
    fv = fv[..., None]
    return (p00 * (1 - fu) + p01 * fu) * (1 - fv) + (p10 * (1 - fu) + p11 * fu) * fv


def extract_crop(pano: Panorama, cam: CameraParams) -> np.ndarray:
    """Pinhole crop of the panorama, bilinearly interpolated.

    Returns an (out_height, out_width, 3) array in the panorama's
    radiometric state.
    """
    dirs = _crop_ray_dirs(cam)
    u, v = direction_to_pixel(dirs, pano.width, pano.height, clamp_poles=True)
    return bilinear_sample(pano.pixels, u, v)


def project_to_crop(d, cam: CameraParams):
    """Project a world direction through the crop's pinhole camera.

    Returns continuous (col, row) coordinates; directions behind the
    camera yield NaN.
    """
    d = np.asarray(d, dtype=float)
    local = camera_rotation(cam.elevation, cam.azimuth).T @ d
    if local[2] <= 0:
        return np.nan, np.nan
    tan_v = np.tan(np.radians(cam.vfov) / 2.0)
    tan_h = tan_v * cam.out_width / cam.out_height
    x = local[0] / local[2] / tan_h
    y = local[1] / local[2] / tan_v
    col = (x + 1.0) / 2.0 * cam.out_width - 0.5
    row = (1.0 - y) / 2.0 * cam.out_height - 0.5
    return col, row


def sample_camera(rng, out_width: int = 320, out_height: int = 240) -> CameraParams:
    """Uniformly sampled camera parameters; deterministic for a given RNG/seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return CameraParams(
        elevation=rng.uniform(*ELEVATION_RANGE),
        azimuth=rng.uniform(*AZIMUTH_RANGE),
        vfov=rng.uniform(*VFOV_RANGE),
        out_width=out_width,
        out_height=out_height,
    )


def angular_error(a, b) -> float:
    """Angle between two unit vectors, in degrees."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))
