"""HDR sky synthesis from a compact physical parameterization.

The sky hemisphere is evaluated from the published clear-sky coefficient
tables (``hosek`` module).  Directions within the solar disk use a
physical direct-beam model: a 5778 K blackbody spectrum attenuated by
Rayleigh and turbidity-dependent aerosol transmittance along the slant
path.  Spectral queries of the sky reconstruct a smooth metameric
spectrum from the tabulated channel radiances on a fixed three-band
basis, so integrating the spectrum against the color matching functions
returns the tabulated RGB exactly.

Radiometric units: ``sky_color_rgb`` and the environment maps are
expressed in "model units", the tables' native radiance scaled by
``MODEL_SCALE`` so that a unit-exposure clear sky gamma-encodes into
[0, 1]; the exposure parameter absorbs any absolute scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry, hosek
from .colorimetry import SpectralConfig, default_config, spectral_to_rgb
from .pfm import read_pfm, write_pfm

__all__ = [
    "SkyParams",
    "EnvMap",
    "SUN_RADIUS_DEG",
    "GROUND_ALBEDO",
    "sun_dir_from_angles",
    "angles_from_sun_dir",
    "sky_radiance_spectral",
    "sun_radiance_spectral",
    "sky_color_rgb",
    "render_envmap",
]

SUN_RADIUS_DEG = 0.25
GROUND_ALBEDO = 0.3

# Tables' radiance -> model units (see module docstring).  Chosen so the
# brightest circumsolar sky values stay below 0.5 at unit exposure.
MODEL_SCALE = 0.0025

# Direct-beam spectral radiance at unit transmittance, in the tables'
# radiance units; calibrated once so that at t = 2 and 45 degree solar
# elevation the direct horizontal irradiance is ~5x the diffuse sky
# irradiance, a representative clear-sky ratio.
SUN_SPECTRAL_SCALE = 34000.0

# Metameric reconstruction basis: broad Gaussians (mean, sigma) in nm.
_BASIS = ((445.0, 55.0), (550.0, 55.0), (625.0, 60.0))


def sun_dir_from_angles(elevation_deg, azimuth_deg):
    """Unit sun direction from elevation/azimuth in degrees (y-up)."""
    e = np.radians(elevation_deg)
    a = np.radians(azimuth_deg)
    return np.array([np.cos(e) * np.sin(a), np.sin(e), np.cos(e) * np.cos(a)])


def angles_from_sun_dir(sun_dir):
    """(elevation_deg, azimuth_deg) of a unit direction."""
    d = np.asarray(sun_dir, dtype=float)
    elev = np.degrees(np.arcsin(np.clip(d[1], -1.0, 1.0)))
    azim = np.degrees(np.arctan2(d[0], d[2]))
    return elev, azim


@dataclass
class SkyParams:
    """Compact outdoor lighting representation."""

    sun_dir: np.ndarray
    turbidity: float
    exposure: float
    ground_albedo: float = GROUND_ALBEDO

    def __post_init__(self):
        self.sun_dir = np.asarray(self.sun_dir, dtype=float)
        n = np.linalg.norm(self.sun_dir)
        if not np.isclose(n, 1.0, atol=1e-6):
            raise ValueError("sun_dir must be a unit vector")
        self.sun_dir = self.sun_dir / n
        if self.sun_dir[1] < -1e-9:
            raise ValueError("sun must be on or above the horizon")
        if not 1.0 <= self.turbidity <= 10.0:
            raise ValueError(f"turbidity {self.turbidity} outside [1, 10]")
        if not self.exposure > 0:
            raise ValueError("exposure must be positive")

    def to_json_dict(self):
        elev, azim = angles_from_sun_dir(self.sun_dir)
        return {
            "sun_elevation_deg": elev,
            "sun_azimuth_deg": azim,
            "turbidity": self.turbidity,
            "exposure": self.exposure,
            "ground_albedo": self.ground_albedo,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            sun_dir=sun_dir_from_angles(d["sun_elevation_deg"], d["sun_azimuth_deg"]),
            turbidity=d["turbidity"],
            exposure=d["exposure"],
            ground_albedo=d.get("ground_albedo", GROUND_ALBEDO),
        )

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


@dataclass
class EnvMap:
    """HDR lat-long radiance image over the sky hemisphere (lower half zero)."""

    pixels: np.ndarray  # (H, W, 3), linear radiance

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError("envmap pixels must have shape (H, W, 3)")
        h, w = self.pixels.shape[:2]
        if w != 2 * h:
            raise ValueError(f"envmap must be 2:1, got {w}x{h}")
        if not np.all(np.isfinite(self.pixels)):
            raise ValueError("envmap radiance must be finite")
        if np.any(self.pixels < 0):
            raise ValueError("envmap radiance must be non-negative")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    def save_pfm(self, path):
        write_pfm(path, self.pixels)

    @classmethod
    def load_pfm(cls, path):
        data = read_pfm(path)
        if data.ndim == 2:
            data = np.repeat(data[..., None], 3, axis=2)
        return cls(pixels=data)


def _basis_values(wavelengths):
    wl = np.asarray(wavelengths, dtype=float)
    return np.stack(
        [np.exp(-0.5 * ((wl - mu) / sig) ** 2) for mu, sig in _BASIS], axis=-1
    )


def _basis_matrix(cfg: SpectralConfig):
    # Columns: RGB of each basis function under cfg's sampling.
    return spectral_to_rgb(_basis_values(cfg.wavelengths).T, cfg).T


def metameric_weights(rgb, cfg: SpectralConfig | None = None):
    """Basis weights whose spectrum integrates back to ``rgb`` under ``cfg``."""
    if cfg is None:
        cfg = default_config()
    m = _basis_matrix(cfg)
    return np.linalg.solve(m, np.asarray(rgb, dtype=float))


def sky_spectral_samples(dirs, wavelengths, turbidity, sun_dir,
                         albedo=GROUND_ALBEDO, cfg: SpectralConfig | None = None):
    """Metameric sky spectra sampled at the given wavelengths, shape (..., N)."""
    rgb = hosek.sky_radiance_rgb(dirs, turbidity, sun_dir, albedo)
    if cfg is None:
        cfg = default_config()
    m_inv = np.linalg.inv(_basis_matrix(cfg))
    w = rgb @ m_inv.T
    return np.maximum(w @ _basis_values(wavelengths).T, 0.0)


def sky_radiance_spectral(direction, wavelength, turbidity, sun_dir,
                          albedo=GROUND_ALBEDO) -> float:
    """Spectral sky radiance toward ``direction`` at ``wavelength`` (nm)."""
    d = np.asarray(direction, dtype=float)
    if d[1] < -1e-9:
        raise ValueError("direction below horizon")
    if not 360.0 <= wavelength <= 700.0:
        raise ValueError(f"wavelength {wavelength} outside table coverage [360, 700]")
    return float(sky_spectral_samples(d, [wavelength], turbidity, sun_dir, albedo)[0])


def _planck_norm(wavelength_nm):
    # Blackbody shape at the solar effective temperature, normalized at 560 nm.
    def b(wl_nm):
        wl = np.asarray(wl_nm, dtype=float) * 1e-9
        return wl**-5.0 / np.expm1(0.0143877688 / (wl * 5778.0))

    return b(wavelength_nm) / b(560.0)


def _air_mass(elevation_rad):
    z_deg = 90.0 - np.degrees(elevation_rad)
    return 1.0 / (np.cos(np.radians(z_deg)) + 0.15 * (93.885 - z_deg) ** -1.253)


def sun_transmittance(wavelength_nm, turbidity, elevation_rad):
    """Rayleigh and aerosol slant-path transmittance of the direct beam."""
    lam_um = np.asarray(wavelength_nm, dtype=float) / 1000.0
    m = _air_mass(elevation_rad)
    tau_rayleigh = np.exp(-m * 0.008735 * lam_um**-4.08)
    beta = 0.04608 * turbidity - 0.04586
    tau_aerosol = np.exp(-m * max(beta, 0.0) * lam_um**-1.3)
    return tau_rayleigh * tau_aerosol


def sun_radiance_spectral(direction, wavelength, turbidity, sun_dir) -> float:
    """Spectral radiance of the solar disk toward ``direction`` (within 0.25 deg)."""
    d = np.asarray(direction, dtype=float)
    if geometry.angular_error(d, sun_dir) > SUN_RADIUS_DEG:
        raise ValueError("direction outside the solar disk")
    if not 1.0 <= turbidity <= 10.0:
        raise ValueError(f"turbidity {turbidity} outside [1, 10]")
    if not 360.0 <= wavelength <= 700.0:
        raise ValueError(f"wavelength {wavelength} outside table coverage [360, 700]")
    elev = np.arcsin(np.clip(d[1], -1.0, 1.0))
    return float(
        SUN_SPECTRAL_SCALE
        * _planck_norm(wavelength)
        * sun_transmittance(wavelength, turbidity, max(elev, 0.0))
    )


def sun_color_rgb(params: SkyParams, cfg: SpectralConfig | None = None):
    """Solar-disk RGB radiance in model units (includes exposure)."""
    if cfg is None:
        cfg = default_config()
    elev = np.arcsin(np.clip(params.sun_dir[1], -1.0, 1.0))
    spectrum = (
        SUN_SPECTRAL_SCALE
        * _planck_norm(cfg.wavelengths)
        * sun_transmittance(cfg.wavelengths, params.turbidity, max(elev, 0.0))
    )
    # a deeply reddened low sun can leave the CIE RGB gamut; clamp it
    rgb = np.maximum(spectral_to_rgb(spectrum, cfg), 0.0)
    return params.exposure * MODEL_SCALE * rgb


def sky_color_rgb(direction, params: SkyParams,
                  cfg: SpectralConfig | None = None) -> np.ndarray:
    """Linear RGB color of a sky direction, in model units.

    Directions within 0.25 degrees of the sun use the solar-disk model.
    """
    d = np.asarray(direction, dtype=float)
    if d[1] < -1e-9:
        raise ValueError("direction below horizon")
    if geometry.angular_error(d, params.sun_dir) <= SUN_RADIUS_DEG:
        return sun_color_rgb(params, cfg)
    rgb = hosek.sky_radiance_rgb(d, params.turbidity, params.sun_dir,
                                 params.ground_albedo)
    return params.exposure * MODEL_SCALE * rgb


def sky_colors_rgb(dirs, params: SkyParams) -> np.ndarray:
    """Vectorized sky-branch colors for (..., 3) directions (no sun disk)."""
    rgb = hosek.sky_radiance_rgb(dirs, params.turbidity, params.sun_dir,
                                 params.ground_albedo)
    return params.exposure * MODEL_SCALE * rgb


def render_envmap(params: SkyParams, width: int, height: int,
                  cfg: SpectralConfig | None = None,
                  supersample: bool = False,
                  sun: bool = True) -> EnvMap:
    """Render the sky hemisphere into a lat-long environment map.

    Pixels whose center lies within 0.25 degrees of the sun use the solar
    disk model; with ``supersample`` each near-sun pixel is averaged over
    a 4x4 subpixel grid for stable disk coverage.  ``sun=False`` renders
    the sky distribution only.  The lower half is zero.
    """
    if width != 2 * height:
        raise ValueError(f"envmap must be 2:1, got {width}x{height}")
    if height < 8:
        raise ValueError("height must be at least 8")
    half = height // 2
    rows = np.arange(half)
    dirs = geometry.pixel_grid_directions(width, height, rows)
    img = np.zeros((height, width, 3))
    img[:half] = sky_colors_rgb(dirs, params)
    if not sun:
        return EnvMap(pixels=img)

    sun_rgb = sun_color_rgb(params, cfg)
    gamma = geometry.angular_error(dirs, params.sun_dir)
    if not supersample:
        in_disk = gamma <= SUN_RADIUS_DEG
        img[:half][in_disk] = sun_rgb
    else:
        # Supersample pixels near the disk edge (within ~a pixel diagonal).
        margin = np.degrees(np.pi / height) * 1.5 + SUN_RADIUS_DEG
        near = np.argwhere(gamma <= margin)
        sub = (np.arange(4) + 0.5) / 4.0 - 0.5
        du, dv = np.meshgrid(sub, sub)
        for r, c in near:
            d_sub = geometry.pixel_to_direction(c + du, r + dv, width, height)
            g_sub = geometry.angular_error(d_sub, params.sun_dir)
            sky_sub = sky_colors_rgb(d_sub, params)
            sky_sub[g_sub <= SUN_RADIUS_DEG] = sun_rgb
            img[r, c] = sky_sub.reshape(-1, 3).mean(axis=0)
    return EnvMap(pixels=img)
