"""Recover sky parameters from an LDR panorama with a sky mask.

Two-step procedure: the sun direction is fixed first from the bright
sky region, then turbidity is optimized by bound-constrained least
squares from ten starting points, with the exposure eliminated in
closed form inside every cost evaluation.  The sun direction is then
polished to sub-pixel accuracy by minimizing the same reconstruction
residual over the direction alone, holding turbidity fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import geometry, hosek
from .geometry import Panorama
from .sky_model import MODEL_SCALE, GROUND_ALBEDO, SkyParams, angles_from_sun_dir

__all__ = [
    "FitConfig",
    "FitResult",
    "detect_sun_position",
    "solve_exposure",
    "residuals",
    "lsq_minimize",
    "fit_sky_params",
    "fallback_sky_mask",
]

# Rec. 709 luma weights, applied to gamma-linearized pixels.
_LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class FitConfig:
    gamma: float = 2.2
    sun_percentile: float = 98.0
    t_inits: tuple = tuple(float(t) for t in range(1, 11))
    max_iters: int = 200
    cost_tol: float = 1e-12
    step_tol: float = 1e-10
    # sun detection / refinement
    mean_shift_radii: tuple = (8.0, 4.0, 2.5)
    sun_exclusion_deg: float = 2.5
    saturation: float = 0.999
    refine_rounds: int = 2
    refine_limit_deg: float = 2.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.sun_percentile < 100.0:
            raise ValueError("sun percentile must be in (0, 100)")
        if self.refine_rounds < 0:
            raise ValueError("refine rounds must be non-negative")


@dataclass
class FitResult:
    params: SkyParams
    residual_rmse: float
    per_start: list            # (t_init, t_final, omega_final, cost)
    sun_detection: dict
    converged: bool

    def to_json_dict(self):
        elev, azim = angles_from_sun_dir(self.params.sun_dir)
        return {
            "sun_elevation_deg": elev,
            "sun_azimuth_deg": azim,
            "turbidity": self.params.turbidity,
            "exposure": self.params.exposure,
            "residual_rmse": self.residual_rmse,
            "converged": self.converged,
            "sun_detection": self.sun_detection,
            "per_start": [
                {"t_init": a, "t_final": b, "omega_final": c, "cost": d}
                for a, b, c, d in self.per_start
            ],
        }

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2)
            f.write("\n")


def _linearize(pixels, gamma):
    return np.power(np.clip(pixels, 0.0, None), gamma)


def _resolve_mask(pano: Panorama, mask):
    if mask is None:
        mask = pano.sky_mask
    if mask is None:
        mask = fallback_sky_mask(pano)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pano.pixels.shape[:2]:
        raise ValueError("mask dimensions must match the panorama")
    if not mask.any():
        raise ValueError("no sky pixels")
    return mask


def fallback_sky_mask(pano: Panorama) -> np.ndarray:
    """Heuristic sky mask: top-half, blue-dominant, reasonably bright pixels."""
    h, w = pano.pixels.shape[:2]
    lum = _linearize(pano.pixels, 2.2) @ _LUMA
    top = np.zeros((h, w), dtype=bool)
    top[: h // 2] = True
    blueish = (pano.pixels[..., 2] >= pano.pixels[..., 0]) & (
        pano.pixels[..., 2] >= 0.95 * pano.pixels[..., 1]
    )
    cand = top & blueish
    if not cand.any():
        return cand
    thresh = np.percentile(lum[cand], 30.0)
    return cand & (lum >= thresh)


def detect_sun_position(pano: Panorama, mask=None, cfg: FitConfig | None = None):
    """Sun direction from the bright sky region around the luminance peak.

    The brightest masked pixel above the configured percentile seeds a
    mean shift over shrinking angular windows; within each window the
    solid-angle-weighted luminance centroid direction is taken.  The
    result is clamped to the upper hemisphere.  A bright horizon band
    cannot capture the estimate the way a global centroid would, because
    the windows stay anchored to the peak.
    """
    if cfg is None:
        cfg = FitConfig()
    mask = _resolve_mask(pano, mask)
    h, w = pano.pixels.shape[:2]
    lum = _linearize(pano.pixels, cfg.gamma) @ _LUMA
    thresh = np.percentile(lum[mask], cfg.sun_percentile)
    bright = mask & (lum >= thresh)
    if not bright.any():
        raise ValueError("no pixels above the sun threshold")
    dirs = geometry.pixel_grid_directions(w, h)
    weights = geometry.solid_angles(w, h)
    masked_lum = np.where(bright, lum, -np.inf)
    peak = np.unravel_index(np.argmax(masked_lum), masked_lum.shape)
    d = dirs[peak]
    for radius in cfg.mean_shift_radii:
        window = mask & (dirs @ d >= np.cos(np.radians(radius)))
        wgt = weights[window] * lum[window]
        centroid = (dirs[window] * wgt[:, None]).sum(axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0:
            break
        d = centroid / norm
    if d[1] < 0:
        d = d.copy()
        d[1] = 0.0
        d /= np.linalg.norm(d)
    final = bright & (dirs @ d >= np.cos(np.radians(cfg.mean_shift_radii[-1])))
    return d, {
        "threshold_percentile": cfg.sun_percentile,
        "component_size": int(final.sum()),
        "peak_pixel": [int(peak[0]), int(peak[1])],
        "mean_shift_radii_deg": list(cfg.mean_shift_radii),
    }


def _model_rgb(cos_theta, gamma_sun, t, sun_elevation, albedo=GROUND_ALBEDO):
    state = hosek.sky_state(t, albedo, sun_elevation)
    return MODEL_SCALE * state.radiance(cos_theta, gamma_sun)


def _masked_geometry(pano: Panorama, mask, sun_dir):
    h, w = pano.pixels.shape[:2]
    dirs = geometry.pixel_grid_directions(w, h)[mask]
    cos_theta = np.clip(dirs[:, 1], 0.0, 1.0)
    gamma_sun = np.arccos(np.clip(dirs @ sun_dir, -1.0, 1.0))
    return cos_theta, gamma_sun


def solve_exposure(pano: Panorama, mask, t, sun_dir, cfg: FitConfig | None = None):
    """Closed-form least-squares exposure for the given turbidity and sun."""
    if cfg is None:
        cfg = FitConfig()
    mask = _resolve_mask(pano, mask)
    p_lin = _linearize(pano.pixels[mask], cfg.gamma)
    cos_theta, gamma_sun = _masked_geometry(pano, mask, sun_dir)
    sun_elev = max(np.arcsin(np.clip(sun_dir[1], -1.0, 1.0)), 0.0)
    f = _model_rgb(cos_theta, gamma_sun, t, sun_elev)
    den = np.sum(f * f)
    if den <= 0:
        raise ValueError("degenerate model output: zero exposure denominator")
    return max(float(np.sum(p_lin * f) / den), 0.0)


def residuals(params: SkyParams, pano: Panorama, mask=None,
              cfg: FitConfig | None = None):
    """Per-pixel, per-channel reconstruction residuals (row-major, channel minor)."""
    if cfg is None:
        cfg = FitConfig()
    mask = _resolve_mask(pano, mask)
    p_lin = _linearize(pano.pixels[mask], cfg.gamma)
    cos_theta, gamma_sun = _masked_geometry(pano, mask, params.sun_dir)
    sun_elev = max(np.arcsin(np.clip(params.sun_dir[1], -1.0, 1.0)), 0.0)
    f = _model_rgb(cos_theta, gamma_sun, params.turbidity, sun_elev,
                   params.ground_albedo)
    return (p_lin - params.exposure * f).ravel()


def lsq_minimize(objective, x0, bounds, max_iters: int = 200,
                 cost_tol: float = 1e-12, step_tol: float = 1e-10):
    """Box-constrained nonlinear least squares (trust-region reflective).

    Returns ``(x, cost, iterations, converged)`` with ``cost`` the sum of
    squared residuals.  ``bounds`` is a (lower, upper) pair of vectors.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    lo = np.atleast_1d(np.asarray(bounds[0], dtype=float))
    hi = np.atleast_1d(np.asarray(bounds[1], dtype=float))
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ValueError(f"x0 {x0} outside bounds")
    res = least_squares(
        objective,
        x0,
        bounds=(lo, hi),
        method="trf",
        ftol=cost_tol,
        xtol=step_tol,
        gtol=1e-14,
        max_nfev=max_iters,
    )
    converged = res.status > 0
    return res.x, float(2.0 * res.cost), int(res.nfev), converged


def _fit_turbidity(p_lin, dirs_m, sun_dir, t_inits, cfg):
    """Multi-start bounded turbidity search with closed-form exposure.

    Returns ``(t, omega, cost, converged, per_start)`` over the masked
    pixel set described by ``p_lin`` and ``dirs_m``.
    """
    cos_theta = np.clip(dirs_m[:, 1], 0.0, 1.0)
    sun_elev = max(np.arcsin(np.clip(sun_dir[1], -1.0, 1.0)), 0.0)
    gamma_sun = np.arccos(np.clip(dirs_m @ sun_dir, -1.0, 1.0))

    last = {}

    def objective(x):
        f = _model_rgb(cos_theta, gamma_sun, float(x[0]), sun_elev)
        den = np.sum(f * f)
        if den <= 0:
            raise ValueError("degenerate model output: zero exposure denominator")
        omega = max(float(np.sum(p_lin * f) / den), 0.0)
        last["omega"] = omega
        return (p_lin - omega * f).ravel()

    per_start = []
    best = None
    for t0 in t_inits:
        try:
            x, cost, _, converged = lsq_minimize(
                objective, [t0], ([1.0], [10.0]),
                max_iters=cfg.max_iters, cost_tol=cfg.cost_tol,
                step_tol=cfg.step_tol,
            )
        except ValueError:
            per_start.append((float(t0), float("nan"), float("nan"), float("inf")))
            continue
        entry = (float(t0), float(x[0]), last["omega"], cost)
        per_start.append(entry)
        if best is None or cost < best[3]:
            best = entry + (converged,)
    if best is None:
        raise ValueError("all starts diverged")
    _, t_star, omega_star, cost_star, converged = best
    return t_star, omega_star, cost_star, converged, per_start


def _refine_sun(p_lin, dirs_m, sun_dir, t, cfg):
    """Polish the sun direction against the reconstruction residual.

    Turbidity stays fixed; the exposure is re-solved in closed form for
    every candidate direction, parameterized by a small tangent-plane
    offset bounded by ``cfg.refine_limit_deg``.
    """
    d0 = np.asarray(sun_dir, dtype=float)
    e1 = np.cross([0.0, 1.0, 0.0], d0)
    n1 = np.linalg.norm(e1)
    if n1 < 1e-9:   # sun at the zenith: any horizontal basis works
        e1 = np.array([1.0, 0.0, 0.0])
    else:
        e1 /= n1
    e2 = np.cross(d0, e1)
    cos_theta = np.clip(dirs_m[:, 1], 0.0, 1.0)

    def objective(x):
        d = d0 + x[0] * e1 + x[1] * e2
        d /= np.linalg.norm(d)
        elev = max(np.arcsin(np.clip(d[1], -1.0, 1.0)), 0.0)
        gamma_sun = np.arccos(np.clip(dirs_m @ d, -1.0, 1.0))
        f = _model_rgb(cos_theta, gamma_sun, t, elev)
        den = np.sum(f * f)
        if den <= 0:
            return p_lin.ravel()
        omega = max(float(np.sum(p_lin * f) / den), 0.0)
        return (p_lin - omega * f).ravel()

    lim = np.radians(cfg.refine_limit_deg)
    x, _, _, _ = lsq_minimize(
        objective, [0.0, 0.0], ([-lim, -lim], [lim, lim]),
        max_iters=cfg.max_iters, cost_tol=1e-14, step_tol=1e-12,
    )
    d = d0 + x[0] * e1 + x[1] * e2
    d /= np.linalg.norm(d)
    if d[1] < 0:
        d[1] = 0.0
        d /= np.linalg.norm(d)
    return d


def fit_sky_params(pano: Panorama, mask=None, cfg: FitConfig | None = None) -> FitResult:
    """Full fit: sun detection, turbidity search, then sun polish.

    The exposure is recomputed in closed form inside every cost
    evaluation, so the bounded search is one-dimensional in turbidity.
    Pixels near the detected sun and saturated pixels are excluded from
    the residual: the sky term cannot explain the solar disc, and
    clipped values carry no radiometric information.  After the
    multi-start turbidity search the sun direction is refined against
    the same residual (turbidity held fixed), alternating with
    single-start turbidity refits.
    """
    if cfg is None:
        cfg = FitConfig()
    mask = _resolve_mask(pano, mask)
    sun_dir, detection = detect_sun_position(pano, mask, cfg)

    h, w = pano.pixels.shape[:2]
    dirs = geometry.pixel_grid_directions(w, h)
    fit_mask = mask & (dirs @ sun_dir < np.cos(np.radians(cfg.sun_exclusion_deg)))
    fit_mask &= pano.pixels.max(axis=-1) < cfg.saturation
    if not fit_mask.any():
        fit_mask = mask
    p_lin = _linearize(pano.pixels[fit_mask], cfg.gamma)
    dirs_m = dirs[fit_mask]

    t_star, omega_star, cost_star, converged, per_start = _fit_turbidity(
        p_lin, dirs_m, sun_dir, cfg.t_inits, cfg)
    for _ in range(cfg.refine_rounds):
        sun_dir = _refine_sun(p_lin, dirs_m, sun_dir, t_star, cfg)
        t_star, omega_star, cost_star, converged, _ = _fit_turbidity(
            p_lin, dirs_m, sun_dir, [t_star], cfg)

    params = SkyParams(
        sun_dir=sun_dir,
        turbidity=t_star,
        exposure=max(omega_star, 1e-12),
        ground_albedo=GROUND_ALBEDO,
    )
    n_res = max(3 * int(fit_mask.sum()), 1)
    return FitResult(
        params=params,
        residual_rmse=float(np.sqrt(cost_star / n_res)),
        per_start=per_start,
        sun_detection=detection,
        converged=bool(converged and np.isfinite(cost_star)),
    )
