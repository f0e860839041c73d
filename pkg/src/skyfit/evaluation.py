"""Loss references, Lambertian relighting and relighting error metrics.

The losses mirror the training objective (KL divergence over sun bins
plus a weighted MSE over the scalar parameters).  Relighting renders a
Lambertian object under an environment map by direct summation over the
map's pixels, and the three metrics compare two renders with optional
global or per-channel scale factors fitted in closed form.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry
from .sky_model import EnvMap

__all__ = [
    "RenderSetup",
    "MetricReport",
    "standardize_q",
    "kl_loss",
    "combined_loss",
    "load_obj",
    "render_lambertian",
    "rmse",
    "si_rmse",
    "per_color_si_rmse",
    "metric_report",
    "sun_error_stats",
    "write_stats_csv",
    "write_stats_figures",
]

log = logging.getLogger(__name__)

COMBINED_BETA = 160.0


def standardize_q(q) -> np.ndarray:
    """Map (omega, t, elevation deg, vfov deg) to comparable scales.

    Exposure enters through its log, turbidity is rescaled to [0, 1]
    over its domain, the two angles are converted to radians.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (4,):
        raise ValueError("q must have four components")
    if q[0] <= 0:
        raise ValueError("exposure must be positive")
    return np.array([
        np.log(q[0]),
        (q[1] - 1.0) / 9.0,
        np.radians(q[2]),
        np.radians(q[3]),
    ])


def _check_distributions(target_s, pred_log_s):
    s = np.asarray(target_s, dtype=float)
    lp = np.asarray(pred_log_s, dtype=float)
    if s.shape != lp.shape or s.ndim != 1:
        raise ValueError("distributions must be equal-length vectors")
    if (s < 0).any() or abs(s.sum() - 1.0) > 1e-6:
        raise ValueError("target is not a probability distribution")
    m = lp.max()
    lse = m + np.log(np.exp(lp - m).sum())
    if abs(lse) > 1e-6:
        raise ValueError("prediction is not a log-distribution")
    return s, lp


def kl_loss(target_s, pred_log_s) -> float:
    """KL divergence sum s_j (log s_j - log p_j), with 0 log 0 = 0."""
    s, lp = _check_distributions(target_s, pred_log_s)
    nz = s > 0
    return float(np.sum(s[nz] * (np.log(s[nz]) - lp[nz])))


def combined_loss(target_s, pred_log_s, target_q, pred_q,
                  beta: float = COMBINED_BETA) -> float:
    """Sun-bin KL plus beta times the MSE over standardized parameters."""
    d = standardize_q(pred_q) - standardize_q(target_q)
    return kl_loss(target_s, pred_log_s) + beta * float(np.mean(d * d))


@dataclass
class RenderSetup:
    """Lambertian relighting configuration.

    ``mesh`` is None for the default unit sphere, or a (vertices,
    normals, faces) triple from :func:`load_obj`.  The view is an
    orthographic projection along ``view_dir`` (pointing from the camera
    toward the object).
    """

    albedo: tuple = (0.8, 0.8, 0.8)
    view_dir: tuple = (0.0, 0.0, -1.0)
    size: int = 128
    mesh: tuple | None = None

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=float)
        if a.shape != (3,) or (a < 0).any() or (a > 1).any():
            raise ValueError("albedo components must lie in [0, 1]")
        v = np.asarray(self.view_dir, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("view direction must be non-zero")
        self.view_dir = tuple(v / n)
        if self.size <= 0:
            raise ValueError("image size must be positive")


@dataclass
class MetricReport:
    rmse: float
    si_rmse: float
    per_color_si_rmse: float
    n_pixels: int

    def to_json_dict(self):
        return {
            "rmse": self.rmse,
            "si_rmse": self.si_rmse,
            "per_color_si_rmse": self.per_color_si_rmse,
            "n_pixels": self.n_pixels,
        }


def load_obj(path):
    """Minimal ASCII OBJ reader: v, vn and triangular f records.

    Faces may index vertices as ``v``, ``v//vn`` or ``v/vt/vn``;
    missing normals are replaced by area-weighted face normals.
    """
    verts, norms, faces, face_norms = [], [], [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise ValueError("only triangular faces are supported")
                vi, ni = [], []
                for p in parts[1:]:
                    fields = p.split("/")
                    vi.append(int(fields[0]) - 1)
                    ni.append(int(fields[-1]) - 1
                              if len(fields) >= 3 and fields[-1] else -1)
                faces.append(vi)
                face_norms.append(ni)
    v = np.asarray(verts, dtype=float)
    f = np.asarray(faces, dtype=int)
    if len(v) == 0 or len(f) == 0:
        raise ValueError("mesh has no geometry")
    if norms and all(i >= 0 for tri in face_norms for i in tri):
        vn = np.zeros_like(v)
        n_arr = np.asarray(norms, dtype=float)
        for tri, nn in zip(f, face_norms):
            vn[tri] = n_arr[nn]
    else:
        vn = np.zeros_like(v)
        e1 = v[f[:, 1]] - v[f[:, 0]]
        e2 = v[f[:, 2]] - v[f[:, 0]]
        fn = np.cross(e1, e2)
        for k in range(3):
            np.add.at(vn, f[:, k], fn)
    lens = np.linalg.norm(vn, axis=1, keepdims=True)
    vn = vn / np.where(lens > 0, lens, 1.0)
    return v, vn, f


def _irradiance_table(env: EnvMap):
    """Per-env-pixel radiance, direction and solid angle, flattened."""
    h, w = env.pixels.shape[:2]
    dirs = geometry.pixel_grid_directions(w, h).reshape(-1, 3)
    sa = geometry.solid_angles(w, h).reshape(-1)
    rad = env.pixels.reshape(-1, 3)
    keep = rad.any(axis=1)
    return rad[keep], dirs[keep], sa[keep]


def _shade(normals, env: EnvMap, albedo):
    """Lambertian colors for an (N, 3) array of unit normals."""
    rad, dirs, sa = _irradiance_table(env)
    cos = np.maximum(normals @ dirs.T, 0.0)
    irr = cos @ (rad * sa[:, None])
    return (np.asarray(albedo) / np.pi) * irr


def _sphere_image(env: EnvMap, setup: RenderSetup):
    s = setup.size
    xs = (np.arange(s) + 0.5) / s * 2.0 - 1.0
    ys = 1.0 - (np.arange(s) + 0.5) / s * 2.0
    x, y = np.meshgrid(xs, ys)
    r2 = x * x + y * y
    inside = r2 <= 1.0
    # orthographic basis: right/up perpendicular to the view direction
    view = np.asarray(setup.view_dir)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(view @ up_hint) > 0.999:
        up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(up_hint, -view)
    right /= np.linalg.norm(right)
    up = np.cross(-view, right)
    z = np.sqrt(np.clip(1.0 - r2[inside], 0.0, 1.0))
    normals = (x[inside][:, None] * right + y[inside][:, None] * up
               + z[:, None] * (-view))
    img = np.zeros((s, s, 3))
    img[inside] = _shade(normals, env, setup.albedo)
    mask = inside
    return img, mask


def _mesh_image(env: EnvMap, setup: RenderSetup):
    v, vn, f = setup.mesh
    view = np.asarray(setup.view_dir)
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(view @ up_hint) > 0.999:
        up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(up_hint, -view)
    right /= np.linalg.norm(right)
    up = np.cross(-view, right)
    # project into the view plane, fit the mesh into the frame
    px = v @ right
    py = v @ up
    pz = v @ -view          # larger = closer to the camera
    span = max(px.max() - px.min(), py.max() - py.min())
    cx, cy = (px.max() + px.min()) / 2, (py.max() + py.min()) / 2
    scale = setup.size * 0.9 / span
    sx = (px - cx) * scale + setup.size / 2
    sy = setup.size / 2 - (py - cy) * scale
    s = setup.size
    img = np.zeros((s, s, 3))
    depth = np.full((s, s), -np.inf)
    nidx = np.full((s, s), -1)
    bary = np.zeros((s, s, 3))
    for ti, tri in enumerate(f):
        xs, ys, zs = sx[tri], sy[tri], pz[tri]
        x0, x1 = int(np.floor(xs.min())), int(np.ceil(xs.max()))
        y0, y1 = int(np.floor(ys.min())), int(np.ceil(ys.max()))
        x0, x1 = max(x0, 0), min(x1, s - 1)
        y0, y1 = max(y0, 0), min(y1, s - 1)
        if x0 > x1 or y0 > y1:
            continue
        gx, gy = np.meshgrid(np.arange(x0, x1 + 1) + 0.5,
                             np.arange(y0, y1 + 1) + 0.5)
        d = ((ys[1] - ys[2]) * (xs[0] - xs[2])
             + (xs[2] - xs[1]) * (ys[0] - ys[2]))
        if abs(d) < 1e-12:
            continue
        w0 = ((ys[1] - ys[2]) * (gx - xs[2]) + (xs[2] - xs[1]) * (gy - ys[2])) / d
        w1 = ((ys[2] - ys[0]) * (gx - xs[2]) + (xs[0] - xs[2]) * (gy - ys[2])) / d
        w2 = 1.0 - w0 - w1
        cover = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not cover.any():
            continue
        z = w0 * zs[0] + w1 * zs[1] + w2 * zs[2]
        rows = np.floor(gy[cover]).astype(int)
        cols = np.floor(gx[cover]).astype(int)
        zc = z[cover]
        better = zc > depth[rows, cols]
        rows, cols, zc = rows[better], cols[better], zc[better]
        depth[rows, cols] = zc
        nidx[rows, cols] = ti
        bary[rows, cols] = np.stack([w0[cover][better], w1[cover][better],
                                     w2[cover][better]], axis=-1)
    mask = nidx >= 0
    if mask.any():
        tri = f[nidx[mask]]
        w = bary[mask]
        normals = (vn[tri] * w[..., None]).sum(axis=1)
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        normals /= np.where(lens > 0, lens, 1.0)
        img[mask] = _shade(normals, env, setup.albedo)
    return img, mask


def render_lambertian(env: EnvMap, setup: RenderSetup | None = None):
    """Orthographic Lambertian render under the environment map.

    Returns ``(image, mask)`` where the mask marks foreground pixels;
    the background is black.  Irradiance is computed by direct
    summation over the environment pixels.
    """
    if setup is None:
        setup = RenderSetup()
    if setup.mesh is None:
        return _sphere_image(env, setup)
    return _mesh_image(env, setup)


def _masked(a, b, mask):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    if mask is None:
        return a.reshape(-1, a.shape[-1]), b.reshape(-1, b.shape[-1])
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[:-1]:
        raise ValueError("mask shape must match the images")
    return a[mask], b[mask]


def rmse(a, b, mask=None) -> float:
    """Root mean square difference over masked pixels and channels."""
    av, bv = _masked(a, b, mask)
    return float(np.sqrt(np.mean((av - bv) ** 2)))


def si_rmse(a, b, mask=None) -> float:
    """Scale-invariant RMSE: one global scale on ``a`` fitted first."""
    av, bv = _masked(a, b, mask)
    den = np.sum(av * av)
    if den == 0:
        raise ValueError("first image is zero on the mask")
    alpha = np.sum(av * bv) / den
    return float(np.sqrt(np.mean((alpha * av - bv) ** 2)))


def per_color_si_rmse(a, b, mask=None) -> float:
    """Per-channel scale factors on ``a``, then pooled RMSE."""
    av, bv = _masked(a, b, mask)
    den = np.sum(av * av, axis=0)
    alpha = np.zeros(av.shape[1])
    nz = den > 0
    alpha[nz] = np.sum(av * bv, axis=0)[nz] / den[nz]
    if not nz.all():
        log.warning("zero channel in si-RMSE input; its scale set to 0")
    return float(np.sqrt(np.mean((alpha * av - bv) ** 2)))


def metric_report(a, b, mask=None) -> MetricReport:
    av, _ = _masked(a, b, mask)
    return MetricReport(
        rmse=rmse(a, b, mask),
        si_rmse=si_rmse(a, b, mask),
        per_color_si_rmse=per_color_si_rmse(a, b, mask),
        n_pixels=int(len(av)),
    )


_ELEV_EDGES = np.array([0.0, 18.0, 36.0, 54.0, 72.0, 90.0])
_AZIM_EDGES = np.linspace(-180.0, 180.0, 9)


def _percentiles(x):
    return [float(np.percentile(x, p)) for p in (25, 50, 75)]


def sun_error_stats(pred_dirs, true_dirs) -> dict:
    """Angular-error distribution of predicted sun directions.

    Returns the raw errors, CDF samples, and 25/50/75th percentiles
    binned by the true elevation (18-degree bands) and by the true
    azimuth (45-degree sectors, camera-relative if the inputs are).
    """
    pred = np.asarray(pred_dirs, dtype=float)
    true = np.asarray(true_dirs, dtype=float)
    if pred.shape != true.shape or pred.ndim != 2 or pred.shape[0] == 0:
        raise ValueError("inputs must be equal-length non-empty direction lists")
    err = np.asarray(geometry.angular_error(pred, true), dtype=float)
    order = np.sort(err)
    cdf = (np.arange(len(order)) + 1) / len(order)
    elev = np.degrees(np.arcsin(np.clip(true[:, 1], -1.0, 1.0)))
    azim = np.degrees(np.arctan2(true[:, 0], true[:, 2]))
    rows = [("all", *_percentiles(err))]
    for lo, hi in zip(_ELEV_EDGES[:-1], _ELEV_EDGES[1:]):
        sel = (elev >= lo) & (elev < hi)
        if sel.any():
            rows.append((f"elev_{lo:g}_{hi:g}", *_percentiles(err[sel])))
    for lo, hi in zip(_AZIM_EDGES[:-1], _AZIM_EDGES[1:]):
        sel = (azim >= lo) & (azim < hi)
        if sel.any():
            rows.append((f"azim_{lo:g}_{hi:g}", *_percentiles(err[sel])))
    return {
        "errors": err,
        "cdf_x": order,
        "cdf_y": cdf,
        "rows": rows,
        "median": float(np.median(err)),
    }


def write_stats_csv(stats: dict, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin", "p25", "p50", "p75"])
        for row in stats["rows"]:
            w.writerow([row[0]] + [f"{x:.6f}" for x in row[1:]])


def write_stats_figures(stats: dict, out_dir):
    """Render the error CDF and per-bin percentile charts as PNG files."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(stats["cdf_x"], stats["cdf_y"])
    ax.set_xlabel("angular error (deg)")
    ax.set_ylabel("fraction of samples")
    ax.set_title("Sun direction error CDF")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    cdf_path = out_dir / "sun_error_cdf.png"
    fig.savefig(cdf_path, dpi=120)
    plt.close(fig)

    labels = [r[0] for r in stats["rows"]]
    p25 = [r[1] for r in stats["rows"]]
    p50 = [r[2] for r in stats["rows"]]
    p75 = [r[3] for r in stats["rows"]]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels)), 3.5))
    ax.vlines(x, p25, p75, color="#88aacc", lw=6, label="25th-75th pct")
    ax.plot(x, p50, "k_", ms=12, label="median")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=60, ha="right")
    ax.set_ylabel("angular error (deg)")
    ax.set_title("Sun direction error by bin")
    ax.legend()
    fig.tight_layout()
    bins_path = out_dir / "sun_error_bins.png"
    fig.savefig(bins_path, dpi=120)
    plt.close(fig)
    return [cdf_path, bins_path]
