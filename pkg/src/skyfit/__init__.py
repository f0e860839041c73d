"""skyfit: HDR outdoor sky synthesis, panorama sky-parameter fitting,
dataset generation and relighting metrics."""

__version__ = "0.1.0"
