"""Training objective: sun-bin KL divergence plus weighted parameter MSE.

The parameter head works in standardized coordinates so the combined
loss here equals the dataset pipeline's reference loss evaluated on the
corresponding physical 4-vectors (omega, turbidity, camera elevation,
vfov).
"""

from __future__ import annotations

import numpy as np
import torch

COMBINED_BETA = 160.0


def standardize_q(q) -> np.ndarray:
    """(omega, t, elevation deg, vfov deg) -> (log omega, (t-1)/9, radians)."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError("q must have four components")
    if np.any(q[..., 0] <= 0):
        raise ValueError("exposure must be positive")
    return np.stack([
        np.log(q[..., 0]),
        (q[..., 1] - 1.0) / 9.0,
        np.radians(q[..., 2]),
        np.radians(q[..., 3]),
    ], axis=-1)


def destandardize_q(q_std) -> np.ndarray:
    """Inverse of :func:`standardize_q`."""
    q = np.asarray(q_std, dtype=float)
    if q.shape[-1] != 4:
        raise ValueError("standardized q must have four components")
    return np.stack([
        np.exp(q[..., 0]),
        9.0 * q[..., 1] + 1.0,
        np.degrees(q[..., 2]),
        np.degrees(q[..., 3]),
    ], axis=-1)


def kl_terms(target_s: torch.Tensor, pred_log_s: torch.Tensor) -> torch.Tensor:
    """Per-sample KL divergence sum s (log s - log p), with 0 log 0 = 0."""
    ent = torch.special.xlogy(target_s, target_s).sum(dim=-1)
    return ent - (target_s * pred_log_s).sum(dim=-1)


def combined_loss(target_s, pred_log_s, target_q_std, pred_q_std,
                  beta: float = COMBINED_BETA) -> torch.Tensor:
    """Mean over the batch of KL + beta * MSE(standardized parameters)."""
    kl = kl_terms(target_s, pred_log_s)
    mse = ((pred_q_std - target_q_std) ** 2).mean(dim=-1)
    return (kl + beta * mse).mean()
