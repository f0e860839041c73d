"""Training loop, checkpointing, prediction and fixture export."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import DataLoader

from .data import CropDataset, bin_centers, encode_photo, load_manifest
from .losses import COMBINED_BETA, combined_loss, destandardize_q, kl_terms
from .model import NATIVE_SIZE, ModelSpec, SkyCNN

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.01            # initial rate at the reference batch of 128
    lr_decay: float = 1.0       # per-epoch multiplicative decay after warmup
    warmup_epochs: int = 0      # linear ramp to the full rate
    batch_size: int = 32        # reference scale is 128; 32 is the desk default
    epochs: int = 5
    beta: float = COMBINED_BETA
    patience: int = 3           # early-stopping patience on validation loss
    augment_flip: bool = True   # mirror crops (and their sun targets)
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs <= 0:
            raise ValueError("rates and sizes must be positive")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be non-negative")
        if self.beta <= 0 or self.patience <= 0:
            raise ValueError("beta and patience must be positive")


@dataclass
class TrainResult:
    checkpoint_path: str
    history: list               # (epoch, train_loss, val_loss or nan)
    initial_train_loss: float


def _epoch_loss(model, loader, cfg, optimizer=None):
    """Mean combined loss over a loader; one optimizer step per batch."""
    total, count = 0.0, 0
    for step, (img, s, q_std) in enumerate(loader):
        log_s, pred_q = model(img)
        loss = combined_loss(s, log_s, q_std, pred_q, beta=cfg.beta)
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss {loss.item()} at step {step}; "
                "check the learning rate and the input data")
        if optimizer is not None:
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
        total += loss.item() * img.shape[0]
        count += img.shape[0]
    return total / max(count, 1)


def train(manifest_path, out_dir, spec: ModelSpec | None = None,
          cfg: TrainConfig | None = None) -> TrainResult:
    """Fit the network on the manifest's train split.

    Writes ``checkpoint.pt`` (best validation weights when a val split
    exists, else the final weights) and ``history.csv`` under
    ``out_dir``.  Raises on an empty train split or a non-finite loss.
    """
    if spec is None:
        spec = ModelSpec()
    if cfg is None:
        cfg = TrainConfig()
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = load_manifest(manifest_path)
    root = manifest_path.parent
    train_rows = [r for r in rows if r.split == "train"]
    val_rows = [r for r in rows if r.split == "val"]
    if not train_rows:
        raise ValueError("manifest has no train rows")
    log.info("training on %d crops (%d validation)", len(train_rows),
             len(val_rows))

    torch.manual_seed(cfg.seed)
    model = SkyCNN(spec)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    def lr_factor(epoch):
        if epoch < cfg.warmup_epochs:
            return (epoch + 1) / cfg.warmup_epochs
        return cfg.lr_decay ** (epoch - cfg.warmup_epochs)

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lr_factor)
    gen = torch.Generator().manual_seed(cfg.seed)
    train_loader = DataLoader(CropDataset(train_rows, root, spec.input_size,
                                          augment_flip=cfg.augment_flip),
                              batch_size=cfg.batch_size, shuffle=True,
                              generator=gen)
    val_loader = (DataLoader(CropDataset(val_rows, root, spec.input_size),
                             batch_size=cfg.batch_size)
                  if val_rows else None)

    model.eval()
    with torch.no_grad():
        initial = _epoch_loss(model, train_loader, cfg)
    log.info("initial train loss %.4f", initial)

    history = []
    best_val, best_state, since_best = np.inf, None, 0
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        train_loss = _epoch_loss(model, train_loader, cfg, optimizer)
        scheduler.step()
        val_loss = np.nan
        if val_loader is not None:
            model.eval()
            with torch.no_grad():
                val_loss = _epoch_loss(model, val_loader, cfg)
        history.append((epoch, train_loss, val_loss))
        log.info("epoch %d: train %.4f val %s", epoch, train_loss,
                 "-" if np.isnan(val_loss) else f"{val_loss:.4f}")
        if val_loader is not None:
            if val_loss < best_val:
                best_val, since_best = val_loss, 0
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    log.info("early stop at epoch %d (no val improvement "
                             "for %d epochs)", epoch, cfg.patience)
                    break
    if best_state is not None:
        model.load_state_dict(best_state)

    ckpt = out_dir / "checkpoint.pt"
    torch.save({
        "model_state": model.state_dict(),
        "spec": asdict(spec),
        "cfg": asdict(cfg),
        "initial_train_loss": initial,
        "history": history,
    }, ckpt)
    with open(out_dir / "history.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for row in history:
            w.writerow(row)
    return TrainResult(str(ckpt), history, initial)


def load_checkpoint(path):
    """Restore (model in eval mode, saved payload dict)."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    spec_d = dict(payload["spec"])
    spec_d["input_size"] = tuple(spec_d["input_size"])
    spec_d["conv_stack"] = tuple(tuple(c) for c in spec_d["conv_stack"])
    model = SkyCNN(ModelSpec(**spec_d))
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


def _photo_to_tensor(photo, input_size):
    if isinstance(photo, (str, Path)):
        photo = np.asarray(Image.open(photo).convert("RGB"))
    arr = np.asarray(photo)
    if arr.shape != (*NATIVE_SIZE, 3):
        raise ValueError(
            f"photo must be {NATIVE_SIZE[1]}x{NATIVE_SIZE[0]} RGB, "
            f"got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    arr = arr.astype(np.float32)
    h, w = input_size
    if (h, w) != NATIVE_SIZE:
        img = Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8))
        arr = np.asarray(img.resize((w, h), Image.BILINEAR),
                         dtype=np.float32) / 255.0
    return encode_photo(torch.from_numpy(arr.transpose(2, 0, 1).copy()))[None]


def predict(model, photo):
    """(sun log-distribution (160,), physical q 4-vector) for one photo.

    ``model`` is a ``SkyCNN`` or a checkpoint path; the photo must be
    320x240 RGB (a path, a uint8 array, or floats in [0, 1]).
    """
    if not isinstance(model, SkyCNN):
        model, _ = load_checkpoint(model)
    model.eval()
    with torch.no_grad():
        log_s, q_std = model(_photo_to_tensor(photo, model.spec.input_size))
    return (log_s[0].double().numpy(),
            destandardize_q(q_std[0].double().numpy()))


def sun_error_deg(pred_log_s, sun_dir_camera) -> float:
    """Angle between the argmax bin center and the true sun direction."""
    center = bin_centers()[int(np.argmax(pred_log_s))]
    dot = np.clip(np.dot(center, sun_dir_camera), -1.0, 1.0)
    return float(np.degrees(np.arccos(dot)))


def export_fixtures(model, manifest_path, out_path, count: int = 16,
                    beta: float = COMBINED_BETA) -> list:
    """Write (target, prediction) pairs for cross-component loss checks.

    Each fixture carries the sun target, the predicted log-distribution,
    the physical target and predicted q vectors, and this package's loss
    values, so an independent loss implementation can be compared
    against ``loss_combined`` to tolerance.
    """
    if not isinstance(model, SkyCNN):
        model, _ = load_checkpoint(model)
    manifest_path = Path(manifest_path)
    rows = load_manifest(manifest_path)[:count]
    fixtures = []
    for row in rows:
        log_s, q = predict(model, manifest_path.parent / row.photo_path)
        kl = kl_terms(torch.from_numpy(row.sun_target_s),
                      torch.from_numpy(log_s)).item()
        d = (np.log(q[0]) - np.log(row.params_q[0]),
             (q[1] - row.params_q[1]) / 9.0,
             np.radians(q[2] - row.params_q[2]),
             np.radians(q[3] - row.params_q[3]))
        fixtures.append({
            "photo_path": row.photo_path,
            "target_s": [float(x) for x in row.sun_target_s],
            "pred_log_s": [float(x) for x in log_s],
            "target_q": [float(x) for x in row.params_q],
            "pred_q": [float(x) for x in q],
            "beta": float(beta),
            "loss_kl": float(kl),
            "loss_combined": float(kl + beta * np.mean(np.square(d))),
        })
    with open(out_path, "w") as f:
        json.dump(fixtures, f, indent=2)
        f.write("\n")
    return fixtures
