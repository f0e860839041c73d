"""Spectral to RGB conversion via the CIE 1931 standard observer.

Color matching functions use the multi-lobe piecewise-Gaussian fits of
Wyman, Sloan and Shirley (JCGT 2013), accurate to a fraction of a percent
of the tabulated 2-degree observer over the visible range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpectralConfig",
    "cie_xyz_cmf",
    "default_config",
    "spectral_to_rgb",
    "XYZ_TO_CIE_RGB",
    "XYZ_TO_LINEAR_SRGB",
]

# XYZ -> CIE RGB (equal-energy white), the conversion used for sky rendering.
XYZ_TO_CIE_RGB = np.array(
    [
        [2.3646138, -0.8965406, -0.4680733],
        [-0.5151661, 1.4264081, 0.0887581],
        [0.0052037, -0.0144082, 1.0092106],
    ]
)

# XYZ -> linear sRGB (D65), offered as the configurable alternative.
XYZ_TO_LINEAR_SRGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)


def _lobe(wl, alpha, mu, sigma1, sigma2):
    sigma = np.where(wl < mu, sigma1, sigma2)
    t = (wl - mu) / sigma
    return alpha * np.exp(-0.5 * t * t)


def cie_xyz_cmf(wavelengths) -> np.ndarray:
    """CIE 1931 2-degree color matching values at the given wavelengths (nm).

    Returns an array of shape (N, 3) with columns (xbar, ybar, zbar).
    """
    wl = np.asarray(wavelengths, dtype=float)
    x = (
        _lobe(wl, 1.056, 599.8, 37.9, 31.0)
        + _lobe(wl, 0.362, 442.0, 16.0, 26.7)
        + _lobe(wl, -0.065, 501.1, 20.4, 26.2)
    )
    y = _lobe(wl, 0.821, 568.8, 46.9, 40.5) + _lobe(wl, 0.286, 530.9, 16.3, 31.1)
    z = _lobe(wl, 1.217, 437.0, 11.8, 36.0) + _lobe(wl, 0.681, 459.0, 26.0, 13.8)
    return np.stack([x, y, z], axis=-1)


@dataclass(frozen=True)
class SpectralConfig:
    """Wavelength sampling and color conversion used by the spectral pipeline."""

    wavelengths: np.ndarray
    cmf: np.ndarray
    xyz_to_rgb: np.ndarray = field(default_factory=lambda: XYZ_TO_CIE_RGB.copy())

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=float)
        cmf = np.asarray(self.cmf, dtype=float)
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "cmf", cmf)
        object.__setattr__(self, "xyz_to_rgb", np.asarray(self.xyz_to_rgb, dtype=float))
        if wl.ndim != 1 or wl.size < 2:
            raise ValueError("need at least two wavelength samples")
        if np.any(np.diff(wl) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        if wl[0] < 360.0 - 1e-9 or wl[-1] > 700.0 + 1e-9:
            raise ValueError("wavelengths must lie within [360, 700] nm")
        if cmf.shape != (wl.size, 3):
            raise ValueError("cmf rows must align with wavelengths")
        if self.xyz_to_rgb.shape != (3, 3):
            raise ValueError("xyz_to_rgb must be 3x3")


def default_config(n_samples: int = 11) -> SpectralConfig:
    """Uniform sampling of [360, 700] nm (11 samples, 34 nm step by default)."""
    wl = np.linspace(360.0, 700.0, n_samples)
    return SpectralConfig(wavelengths=wl, cmf=cie_xyz_cmf(wl))


def spectral_to_rgb(samples, cfg: SpectralConfig) -> np.ndarray:
    """Integrate per-wavelength radiances against the CMF and convert to RGB.

    ``samples`` may be a 1-D array aligned with ``cfg.wavelengths`` or an
    array of shape (..., N) for batched conversion; the trailing axis is
    integrated with the trapezoidal rule.
    """
    s = np.asarray(samples, dtype=float)
    if s.shape[-1] != cfg.wavelengths.size:
        raise ValueError(
            f"got {s.shape[-1]} samples for {cfg.wavelengths.size} wavelengths"
        )
    trapezoid = getattr(np, "trapezoid", np.trapz)
    xyz = trapezoid(s[..., None] * cfg.cmf, x=cfg.wavelengths, axis=-2)
    return xyz @ cfg.xyz_to_rgb.T
