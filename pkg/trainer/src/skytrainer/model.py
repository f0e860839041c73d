"""Two-head CNN: sun-bin log-distribution plus parameter regression.

Seven convolutions feed a shared FC-2048, after which the network
splits into a 160-way sun head (log-softmax output) and a 4-way linear
parameters head.  Every layer is followed by batch normalization and
then an ELU activation.  The native photo size is 320x240; a desk-scale
spec may halve the input to 160x120 with the conv stack unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

# (out channels, kernel, stride) for the shared conv stack.
CONV_STACK = (
    (64, 7, 2),
    (128, 5, 2),
    (256, 3, 2),
    (256, 3, 1),
    (256, 3, 2),
    (256, 3, 1),
    (256, 3, 2),
)

NATIVE_SIZE = (240, 320)       # (height, width) of the dataset crops
N_SUN_BINS = 160
N_PARAMS = 4


@dataclass(frozen=True)
class ModelSpec:
    """Architecture parameters.

    ``input_size`` is (height, width) seen by the conv stack; photos at
    the native 320x240 are downscaled on load when it is smaller.
    """

    input_size: tuple = NATIVE_SIZE
    fc_dim: int = 2048
    n_sun_bins: int = N_SUN_BINS
    n_params: int = N_PARAMS
    conv_stack: tuple = field(default=CONV_STACK)

    def __post_init__(self):
        h, w = self.input_size
        if h <= 0 or w <= 0 or self.fc_dim <= 0:
            raise ValueError("sizes must be positive")
        if self.n_sun_bins <= 0 or self.n_params <= 0:
            raise ValueError("head widths must be positive")

    def feature_hw(self):
        """Spatial size after the conv stack (padding k//2 throughout)."""
        h, w = self.input_size
        for _, k, s in self.conv_stack:
            h = (h + 2 * (k // 2) - k) // s + 1
            w = (w + 2 * (k // 2) - k) // s + 1
        return h, w


class SkyCNN(nn.Module):
    """The two-head network; ``forward`` returns (log_s, q_std).

    ``log_s`` is a (batch, n_sun_bins) log-distribution (log-softmax,
    so logsumexp over bins is 0).  ``q_std`` is the parameter head
    output in standardized coordinates (log omega, (t - 1)/9, elevation
    and vfov in radians); :func:`skytrainer.losses.destandardize_q`
    maps it back to physical units.
    """

    def __init__(self, spec: ModelSpec | None = None):
        super().__init__()
        if spec is None:
            spec = ModelSpec()
        self.spec = spec
        layers = []
        c_in = 3
        for c_out, k, s in spec.conv_stack:
            layers += [
                nn.Conv2d(c_in, c_out, k, stride=s, padding=k // 2),
                nn.BatchNorm2d(c_out),
                nn.ELU(),
            ]
            c_in = c_out
        self.conv = nn.Sequential(*layers)
        fh, fw = spec.feature_hw()
        self.shared = nn.Sequential(
            nn.Flatten(),
            nn.Linear(c_in * fh * fw, spec.fc_dim),
            nn.BatchNorm1d(spec.fc_dim),
            nn.ELU(),
        )
        self.sun_head = nn.Linear(spec.fc_dim, spec.n_sun_bins)
        self.params_head = nn.Linear(spec.fc_dim, spec.n_params)

    def forward(self, x):
        h, w = self.spec.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2:] != (h, w):
            raise ValueError(
                f"expected input of shape (N, 3, {h}, {w}), got {tuple(x.shape)}")
        z = self.shared(self.conv(x))
        log_s = torch.log_softmax(self.sun_head(z), dim=1)
        return log_s, self.params_head(z)
