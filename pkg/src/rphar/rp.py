"""Recurrence-plot rendering for tri-axial sensor recordings.

A scalar series is delay-embedded into phase space, pairwise Euclidean
distances form the recurrence matrix, and the matrix is rendered as an
8-bit texture image. Three axis-fusion variants are supported:

* ``gray``        -- one plot of the per-timestep vector norm,
* ``gray_concat`` -- per-axis plots tiled side by side (width = 3 x height),
* ``rgb``         -- per-axis plots as the R, G, B channels.

By default plots are distance-valued (graded textures). Supplying a
threshold epsilon switches to the classical binary plot where points
within epsilon of each other count as recurrent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LengthError
from .ingest import SensorSample

VARIANTS = ("gray", "gray_concat", "rgb")
POLARITIES = ("dark_recurrent", "light_recurrent")


@dataclass(frozen=True)
class RpConfig:
    m: int = 2                       # embedding dimension
    d: int = 2                       # embedding delay
    epsilon: Optional[float] = None  # None -> distance-valued plot
    polarity: str = "dark_recurrent"

    def __post_init__(self):
        if self.m < 1 or self.d < 1:
            raise ValueError("embedding dimension and delay must be >= 1")
        if self.epsilon is not None and self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}")


@dataclass(frozen=True)
class RpImage:
    """Rendered plot: (height, width) uint8 grid, or (height, width, 3) for rgb."""

    pixels: np.ndarray
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        h, w = self.pixels.shape[:2]
        if self.variant == "gray_concat":
            if w != 3 * h:
                raise ValueError(f"gray_concat must have width = 3 x height, got {w}x{h}")
        elif w != h:
            raise ValueError(f"{self.variant} plots must be square, got {w}x{h}")

    @property
    def channels(self) -> int:
        return 1 if self.pixels.ndim == 2 else self.pixels.shape[2]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def embed(series, m: int, d: int) -> np.ndarray:
    """Delay-embed a scalar series into (N - (m-1)*d) points of dimension m."""
    series = np.asarray(series, dtype=np.float64)
    n = len(series)
    needed = (m - 1) * d + 1
    if n < needed:
        raise LengthError(
            f"series of length {n} too short for m={m}, d={d}; need at least {needed}"
        )
    count = n - (m - 1) * d
    cols = [series[k * d: k * d + count] for k in range(m)]
    return np.stack(cols, axis=1)


def distance_matrix(points: np.ndarray) -> np.ndarray:
    """Pairwise Euclidean distances between embedded points (symmetric, zero diagonal)."""
    from scipy.spatial.distance import cdist

    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    dists = cdist(pts, pts, metric="euclidean")
    np.fill_diagonal(dists, 0.0)
    return dists


def apply_threshold(dists: np.ndarray, epsilon: float) -> np.ndarray:
    """Binary recurrence matrix: 1 where distance <= epsilon (boundary counts)."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return (np.asarray(dists) <= epsilon).astype(np.uint8)


def render_gray(matrix: np.ndarray, polarity: str = "dark_recurrent") -> np.ndarray:
    """Min-max normalize a matrix to an 8-bit image.

    Value 0 (closest recurrence) maps to pixel 0 under dark_recurrent;
    a constant matrix maps to the all-zero image.
    """
    if polarity not in POLARITIES:
        raise ValueError(f"polarity must be one of {POLARITIES}")
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        raise ValueError("cannot render an empty matrix")
    lo, hi = m.min(), m.max()
    if hi > lo:
        scaled = (m - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(m)
    pixels = np.rint(scaled * 255.0).astype(np.uint8)
    if polarity == "light_recurrent":
        pixels = 255 - pixels
    return pixels


def _axis_plot(series: np.ndarray, cfg: RpConfig) -> np.ndarray:
    """Distance (or thresholded) plot of one scalar series, rendered to uint8."""
    dists = distance_matrix(embed(series, cfg.m, cfg.d))
    if cfg.epsilon is not None:
        # 1 - R makes recurrent cells the low values, so the same rendering
        # convention (low -> dark under dark_recurrent) applies to both modes.
        matrix = 1.0 - apply_threshold(dists, cfg.epsilon)
    else:
        matrix = dists
    return render_gray(matrix, cfg.polarity)


def rp_gray(sample: SensorSample, cfg: RpConfig = RpConfig()) -> RpImage:
    """Plot of the per-timestep vector norm of the three axes."""
    norm = np.sqrt(sum(np.asarray(a, dtype=np.float64) ** 2 for a in sample.axes))
    return RpImage(pixels=_axis_plot(norm, cfg), variant="gray")


def rp_gray_concat(sample: SensorSample, cfg: RpConfig = RpConfig()) -> RpImage:
    """Per-axis plots (x, y, z) rendered independently and tiled horizontally."""
    blocks = [_axis_plot(np.asarray(a, dtype=np.float64), cfg) for a in sample.axes]
    return RpImage(pixels=np.hstack(blocks), variant="gray_concat")


def rp_rgb(sample: SensorSample, cfg: RpConfig = RpConfig()) -> RpImage:
    """Per-axis plots as R (x), G (y), B (z) channels, each normalized independently."""
    channels = [_axis_plot(np.asarray(a, dtype=np.float64), cfg) for a in sample.axes]
    return RpImage(pixels=np.stack(channels, axis=2), variant="rgb")


def render_variant(sample: SensorSample, variant: str, cfg: RpConfig = RpConfig()) -> RpImage:
    if variant == "gray":
        return rp_gray(sample, cfg)
    if variant == "gray_concat":
        return rp_gray_concat(sample, cfg)
    if variant == "rgb":
        return rp_rgb(sample, cfg)
    raise ValueError(f"unknown RP variant {variant!r}")


def save_png(image: RpImage, path) -> None:
    """Export as 8-bit grayscale or RGB PNG."""
    from PIL import Image

    mode = "L" if image.pixels.ndim == 2 else "RGB"
    Image.fromarray(image.pixels, mode=mode).save(path, format="PNG")
