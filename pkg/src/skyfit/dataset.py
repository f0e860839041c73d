"""Training-set generation: sun-direction bins, vMF targets, crop extraction.

The sky hemisphere is discretized into 160 bins (5 elevation bands by 32
azimuth sectors) and the sun-position target for a crop is a von
Mises-Fisher distribution over the bin centers, expressed in the crop's
camera frame.  ``build_dataset`` turns a list of panoramas with fitted
sky parameters into PNG crops plus a JSONL manifest with panorama-level
train/val/test splits.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import geometry
from .geometry import CameraParams, Panorama
from .fitting import FitConfig, FitResult, fit_sky_params
from .sky_model import SkyParams, render_envmap, sun_dir_from_angles

__all__ = [
    "SunBinGrid",
    "DatasetRecord",
    "bin_centers",
    "vmf_target",
    "sun_to_camera_frame",
    "synthesize_training_pano",
    "build_dataset",
    "DEFAULT_SPLIT_FRACS",
]

log = logging.getLogger(__name__)

# Panorama-level split proportions for train/val/test.
DEFAULT_SPLIT_FRACS = (0.962, 0.006, 0.032)

VMF_KAPPA = 80.0


@dataclass(frozen=True)
class SunBinGrid:
    """Sky hemisphere discretization, elevation-major bin order."""

    n_elev: int = 5
    n_azim: int = 32

    def __post_init__(self):
        if self.n_elev <= 0 or self.n_azim <= 0:
            raise ValueError("bin counts must be positive")

    @property
    def n_bins(self):
        return self.n_elev * self.n_azim


def bin_centers(grid: SunBinGrid | None = None) -> np.ndarray:
    """Unit direction at the center of every sun bin, shape (n_bins, 3).

    Elevation bands partition [0, 90] degrees uniformly (centers at 9,
    27, 45, 63, 81 for the default grid); azimuth sectors are uniform
    with centers at -180 + (360/n_azim) * (k + 0.5).
    """
    if grid is None:
        grid = SunBinGrid()
    elev_step = 90.0 / grid.n_elev
    azim_step = 360.0 / grid.n_azim
    elevs = elev_step * (np.arange(grid.n_elev) + 0.5)
    azims = -180.0 + azim_step * (np.arange(grid.n_azim) + 0.5)
    out = np.empty((grid.n_bins, 3))
    for i, e in enumerate(elevs):
        for k, a in enumerate(azims):
            out[i * grid.n_azim + k] = sun_dir_from_angles(e, a)
    return out


def vmf_target(sun_dir, grid: SunBinGrid | None = None,
               kappa: float = VMF_KAPPA) -> np.ndarray:
    """von Mises-Fisher probabilities over the bin centers.

    s_j is proportional to exp(kappa * <sun_dir, l_j>), normalized to
    sum to one; the max is subtracted before exponentiation so large
    kappa cannot overflow.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    d = np.asarray(sun_dir, dtype=float)
    if d.shape != (3,) or not np.isclose(np.linalg.norm(d), 1.0, atol=1e-6):
        raise ValueError("sun_dir must be a unit 3-vector")
    centers = bin_centers(grid)
    logits = kappa * (centers @ d)
    logits -= logits.max()
    s = np.exp(logits)
    return s / s.sum()


def sun_to_camera_frame(sun_dir_world, cam: CameraParams) -> np.ndarray:
    """World sun direction expressed relative to the crop's heading.

    Only the camera azimuth is removed, so a camera pointed straight at
    the sun yields azimuth 0 while the sun's elevation is unchanged.
    """
    a = np.radians(cam.azimuth)
    ca, sa = np.cos(a), np.sin(a)
    r_inv = np.array([[ca, 0.0, -sa], [0.0, 1.0, 0.0], [sa, 0.0, ca]])
    return r_inv @ np.asarray(sun_dir_world, dtype=float)


@dataclass
class DatasetRecord:
    """One training example: a crop with its lighting and camera labels."""

    panorama_id: str
    photo_path: str
    camera: CameraParams
    params_q: tuple            # (omega, turbidity, cam elevation deg, vfov deg)
    sun_target_s: np.ndarray   # (n_bins,) probabilities
    sun_dir_world: np.ndarray
    sun_dir_camera: np.ndarray
    split: str

    def __post_init__(self):
        s = np.asarray(self.sun_target_s, dtype=float)
        if abs(s.sum() - 1.0) > 1e-9 or (s < 0).any():
            raise ValueError("sun target must be a probability distribution")
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        self.sun_target_s = s

    def to_json_dict(self):
        return {
            "panorama_id": self.panorama_id,
            "photo_path": self.photo_path,
            "camera": self.camera.to_json_dict(),
            "params_q": list(self.params_q),
            "sun_target_s": [float(x) for x in self.sun_target_s],
            "sun_dir_world": [float(x) for x in self.sun_dir_world],
            "sun_dir_camera": [float(x) for x in self.sun_dir_camera],
            "split": self.split,
        }

    @classmethod
    def from_json_dict(cls, d):
        return cls(
            panorama_id=d["panorama_id"],
            photo_path=d["photo_path"],
            camera=CameraParams.from_json_dict(d["camera"]),
            params_q=tuple(d["params_q"]),
            sun_target_s=np.asarray(d["sun_target_s"], dtype=float),
            sun_dir_world=np.asarray(d["sun_dir_world"], dtype=float),
            sun_dir_camera=np.asarray(d["sun_dir_camera"], dtype=float),
            split=d["split"],
        )


def synthesize_training_pano(seed, width: int = 256, quantize: bool = False,
                             gamma: float = 2.2):
    """Random LDR sky panorama with its generating parameters.

    Turbidity is uniform on [1, 10], exposure log-uniform on [0.3, 3],
    sun elevation uniform on [5, 85] degrees and azimuth uniform.  The
    rendered map is gamma-encoded and clipped to [0, 1] (the clipped
    fraction is logged); ``quantize`` additionally rounds to 8 bits.
    """
    rng = np.random.default_rng(seed)
    params = SkyParams(
        sun_dir=sun_dir_from_angles(rng.uniform(5.0, 85.0),
                                    rng.uniform(-180.0, 180.0)),
        turbidity=rng.uniform(1.0, 10.0),
        exposure=float(np.exp(rng.uniform(np.log(0.3), np.log(3.0)))),
    )
    env = render_envmap(params, width, width // 2, supersample=True)
    encoded = np.power(env.pixels, 1.0 / gamma)
    clipped = float(np.mean(encoded > 1.0))
    if clipped > 0:
        log.debug("seed %s: %.2f%% of encoded pixels clipped", seed, 100 * clipped)
    ldr = np.clip(encoded, 0.0, 1.0)
    if quantize:
        ldr = np.round(ldr * 255.0) / 255.0
    mask = np.zeros(ldr.shape[:2], dtype=bool)
    mask[: ldr.shape[0] // 2] = True
    return Panorama(ldr, mask), params


def _assign_splits(ids, split_fracs, seed):
    """Panorama-level split assignment, deterministic in the seed."""
    fracs = tuple(float(f) for f in split_fracs)
    if len(fracs) != 3 or abs(sum(fracs) - 1.0) > 1e-9 or min(fracs) < 0:
        raise ValueError("split fractions must be three non-negatives summing to 1")
    order = sorted(ids)
    rng = np.random.default_rng([int(seed), 0x5B17])
    rng.shuffle(order)
    n = len(order)
    n_train = int(round(fracs[0] * n))
    n_val = int(round(fracs[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    out = {}
    for i, pid in enumerate(order):
        if i < n_train:
            out[pid] = "train"
        elif i < n_train + n_val:
            out[pid] = "val"
        else:
            out[pid] = "test"
    return out


def _save_png(path, pixels):
    arr = np.clip(np.asarray(pixels) * 255.0, 0.0, 255.0)
    Image.fromarray(np.round(arr).astype(np.uint8), mode="RGB").save(path)


def build_dataset(pano_list, out_dir, seed, crops_per_pano: int = 7,
                  split_fracs=DEFAULT_SPLIT_FRACS,
                  grid: SunBinGrid | None = None,
                  fit_cfg: FitConfig | None = None) -> list:
    """Extract crops and labels for every panorama and write the manifest.

    ``pano_list`` holds ``(panorama_id, panorama, fit_result)`` triples;
    a None fit_result triggers a fit on the fly, and a None panorama (an
    unreadable input) is skipped with a log message.  Non-converged fits
    exclude the panorama.  Outputs under ``out_dir``: one 320x240 PNG
    per crop named {panorama_id}_{crop_idx}.png, MANIFEST.jsonl ordered
    by panorama id then crop index, and a SPLITS.json summary.  Reruns
    with the same inputs and seed are byte-identical.
    """
    if grid is None:
        grid = SunBinGrid()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    items = []
    excluded = {}
    for pid, pano, fit in sorted(pano_list, key=lambda x: x[0]):
        if pano is None:
            log.warning("panorama %s unreadable, skipped", pid)
            excluded[pid] = "unreadable"
            continue
        if fit is None:
            fit = fit_sky_params(pano, cfg=fit_cfg)
        if not fit.converged:
            log.warning("panorama %s: fit did not converge, excluded", pid)
            excluded[pid] = "fit not converged"
            continue
        items.append((pid, pano, fit))

    splits = _assign_splits([pid for pid, _, _ in items], split_fracs, seed)
    records = []
    for pid, pano, fit in items:
        rng = np.random.default_rng([int(seed), zlib.crc32(pid.encode())])
        for k in range(crops_per_pano):
            cam = geometry.sample_camera(rng)
            crop = geometry.extract_crop(pano, cam)
            name = f"{pid}_{k}.png"
            _save_png(out_dir / name, crop)
            sun_cam = sun_to_camera_frame(fit.params.sun_dir, cam)
            records.append(DatasetRecord(
                panorama_id=pid,
                photo_path=name,
                camera=cam,
                params_q=(fit.params.exposure, fit.params.turbidity,
                          cam.elevation, cam.vfov),
                sun_target_s=vmf_target(sun_cam, grid),
                sun_dir_world=np.asarray(fit.params.sun_dir, dtype=float),
                sun_dir_camera=sun_cam,
                split=splits[pid],
            ))

    with open(out_dir / "MANIFEST.jsonl", "w") as f:
        for rec in records:
            f.write(json.dumps(rec.to_json_dict()) + "\n")
    summary = {
        "seed": int(seed),
        "crops_per_pano": int(crops_per_pano),
        "split_fracs": list(float(f) for f in split_fracs),
        "splits": {s: sorted(p for p, v in splits.items() if v == s)
                   for s in ("train", "val", "test")},
        "excluded": excluded,
    }
    with open(out_dir / "SPLITS.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    return records
