"""Analytic clear-sky radiance from the published coefficient tables.

The binary tables under ``data/hosek_wilkie/`` are the authors' published
RGB dataset (see the license file alongside them for provenance).  Layout
per channel:

* ``params-{r,g,b}``: float32, shape (2 albedos, 10 turbidities, 6 bezier
  control points, 9 coefficients).
* ``radiances-{r,g,b}``: float32, shape (2, 10, 6) expected-value control
  points.

Coefficients for a given (turbidity, albedo, solar elevation) are obtained
by linear interpolation across the integer turbidity levels and the two
albedo datasets, and quintic Bezier interpolation in
``(elevation / (pi/2)) ** (1/3)``.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

import numpy as np

__all__ = ["SkyStateRGB", "sky_state", "sky_radiance_rgb"]

@lru_cache(maxsize=1)
def _tables():
    params = []
    radiances = []
    root = resources.files("skyfit") / "data" / "hosek_wilkie"
    for ch in "rgb":
        raw = (root / f"params-{ch}").read_bytes()
        params.append(np.frombuffer(raw, dtype="<f4").reshape(2, 10, 6, 9))
        raw = (root / f"radiances-{ch}").read_bytes()
        radiances.append(np.frombuffer(raw, dtype="<f4").reshape(2, 10, 6))
    return np.stack(params).astype(float), np.stack(radiances).astype(float)


def _bezier(ctrl, x):
    """Quintic Bezier with control points on the last axis."""
    c = np.asarray(ctrl)
    xi = 1.0 - x
    w = np.array([xi**5, 5 * xi**4 * x, 10 * xi**3 * x**2,
                  10 * xi**2 * x**3, 5 * xi * x**4, x**5])
    return c @ w


class SkyStateRGB:
    """Per-channel distribution coefficients and expected radiance."""

    __slots__ = ("coeffs", "radiances", "turbidity", "albedo", "sun_elevation")

    def __init__(self, coeffs, radiances, turbidity, albedo, sun_elevation):
        self.coeffs = coeffs          # (3, 9)
        self.radiances = radiances    # (3,)
        self.turbidity = turbidity
        self.albedo = albedo
        self.sun_elevation = sun_elevation

    def radiance(self, cos_theta, gamma):
        """Channel radiances for view zenith cosine(s) and sun angle(s).

        Broadcasts over array inputs; returns shape ``(..., 3)``.
        """
        ct = np.abs(np.asarray(cos_theta, dtype=float))
        g = np.asarray(gamma, dtype=float)
        cg = np.cos(g)
        cg2 = cg * cg
        A, B, C, D, E, F, G, I, H = (self.coeffs[:, i] for i in range(9))
        # shape: (..., 3)
        ct_ = ct[..., None]
        g_ = g[..., None]
        cg_ = cg[..., None]
        cg2_ = cg2[..., None]
        chi = (1.0 + cg2_) / np.power(1.0 + H * H - 2.0 * H * cg_, 1.5)
        lhs = 1.0 + A * np.exp(B / (ct_ + 0.01))
        rhs = C + D * np.exp(E * g_) + F * cg2_ + G * chi + I * np.sqrt(ct_)
        return np.maximum(lhs * rhs * self.radiances, 0.0)


@lru_cache(maxsize=256)
def _state_cached(turbidity: float, albedo: float, sun_elevation: float):
    params, radiances = _tables()
    if not 1.0 <= turbidity <= 10.0:
        raise ValueError(f"turbidity {turbidity} outside [1, 10]")
    if not 0.0 <= albedo <= 1.0:
        raise ValueError(f"albedo {albedo} outside [0, 1]")
    if not 0.0 <= sun_elevation <= np.pi / 2 + 1e-12:
        raise ValueError("sun elevation outside [0, pi/2]")
    x = (min(sun_elevation, np.pi / 2) / (np.pi / 2)) ** (1.0 / 3.0)
    ti = int(turbidity)
    rem = turbidity - ti
    lo, hi = ti - 1, min(ti, 9)

    def blend(ds):  # ds: (3, 2, 10, 6, ...) control points on axis 3
        c_lo = np.moveaxis(ds[:, :, lo], 2, -1)   # ctrl axis last
        c_hi = np.moveaxis(ds[:, :, hi], 2, -1)
        v_lo = _bezier(c_lo, x)
        v_hi = _bezier(c_hi, x)
        v = (1.0 - rem) * v_lo + rem * v_hi       # (3, 2, ...)
        return (1.0 - albedo) * v[:, 0] + albedo * v[:, 1]

    coeffs = blend(params)       # (3, 9)
    rad = blend(radiances[..., None])[..., 0]  # (3,)
    return SkyStateRGB(coeffs, rad, turbidity, albedo, sun_elevation)


def sky_state(turbidity, albedo, sun_elevation) -> SkyStateRGB:
    """Interpolated sky state for the given conditions."""
    return _state_cached(float(turbidity), float(albedo), float(sun_elevation))


def sky_radiance_rgb(dirs, turbidity, sun_dir, albedo) -> np.ndarray:
    """RGB radiance of sky directions, in the tables' native units.

    ``dirs`` is (..., 3) with y-up unit vectors on the upper hemisphere;
    ``sun_dir`` a unit vector with non-negative y.
    """
    d = np.asarray(dirs, dtype=float)
    s = np.asarray(sun_dir, dtype=float)
    sun_elev = np.arcsin(np.clip(s[1], -1.0, 1.0))
    state = sky_state(turbidity, albedo, max(sun_elev, 0.0))
    cos_theta = d[..., 1]
    if np.any(cos_theta < -1e-9):
        raise ValueError("direction below horizon")
    cos_gamma = np.clip(d @ s, -1.0, 1.0)
    gamma = np.arccos(cos_gamma)
    return state.radiance(np.clip(cos_theta, 0.0, 1.0), gamma)
