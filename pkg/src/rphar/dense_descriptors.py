"""Dense local descriptors over recurrence-plot images.

Descriptors are sampled on a regular grid (stride 6, 16 px patches fully
inside the image). Gray plots use upright SIFT; RGB plots additionally
support per-channel RGB-SIFT, OpponentSIFT, and joint RGB histograms.

SIFT here is the descriptor only: per-pixel gradients on the patch, 4x4
spatial cells x 8 orientation bins with bilinear spatial/orientation
weighting under a Gaussian window, then L2-normalize, clamp at 0.2 and
re-normalize. Orientation is fixed upright: recurrence textures carry
meaningful absolute orientation, so rotation invariance would hurt.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import LengthError
from .rp import RpImage

SIFT_CELLS = 4
SIFT_ORIENTATIONS = 8
SIFT_CLAMP = 0.2
# unit-norm SIFT vectors are scaled by this and clipped to [0, 255] before
# codebook construction; soft-assignment sigmas assume this value range
SIFT_CODEBOOK_SCALE = 512.0

DESCRIPTOR_KINDS = ("sift", "rgb_sift", "opponent_sift", "rgb_hist")
DESCRIPTOR_DIMS = {"sift": 128, "rgb_sift": 384, "opponent_sift": 384, "rgb_hist": 64}

CACHE_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    stride: int = 6
    patch: int = 16

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.patch < 4:
            raise ValueError("patch must be >= 4")


@dataclass(frozen=True)
class LocalDescriptorSet:
    """Per-image dense descriptors: positions (x, y) and row-per-point vectors."""

    image_size: tuple[int, int]           # (width, height)
    positions: np.ndarray                 # (n, 2) int patch centers
    descriptors: np.ndarray               # (n, dim) float32
    descriptor_kind: str
    patch: int

    def __post_init__(self):
        if self.descriptor_kind not in DESCRIPTOR_KINDS:
            raise ValueError(f"unknown descriptor kind {self.descriptor_kind!r}")
        if len(self.positions) != len(self.descriptors):
            raise ValueError("positions and descriptors disagree in length")
        w, h = self.image_size
        half = self.patch // 2
        if len(self.positions):
            x, y = self.positions[:, 0], self.positions[:, 1]
            if (x - half).min() < 0 or (y - half).min() < 0 \
                    or (x - half + self.patch).max() > w or (y - half + self.patch).max() > h:
                raise ValueError("a patch extends outside the image")

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self) -> int:
        return len(self.positions)


def dense_grid(image_size: tuple[int, int], grid: GridSpec = GridSpec()) -> np.ndarray:
    """Row-major patch centers such that every patch lies fully inside the image."""
    w, h = image_size
    if w < grid.patch or h < grid.patch:
        raise LengthError(
            f"image {w}x{h} smaller than one {grid.patch}px patch; empty grid"
        )
    half = grid.patch // 2
    xs = np.arange(0, w - grid.patch + 1, grid.stride) + half
    ys = np.arange(0, h - grid.patch + 1, grid.stride) + half
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


# -- SIFT core ---------------------------------------------------------------

_weight_cache: dict[int, np.ndarray] = {}


def _spatial_weights(patch: int) -> np.ndarray:
    """(patch*patch, cells*cells) bilinear cell weights under a Gaussian window."""
    if patch in _weight_cache:
        return _weight_cache[patch]
    cw = patch / SIFT_CELLS
    coords = np.arange(patch, dtype=np.float64)
    centers = (np.arange(SIFT_CELLS) + 0.5) * cw - 0.5
    lin = np.maximum(0.0, 1.0 - np.abs(coords[:, None] - centers[None, :]) / cw)
    sigma = patch / 2.0
    mid = (patch - 1) / 2.0
    gauss1d = np.exp(-((coords - mid) ** 2) / (2.0 * sigma**2))
    # the 2-D Gaussian window is separable, so fold one 1-D factor per axis
    wg = lin * gauss1d[:, None]          # (patch, cells)
    full = np.einsum("yc,xd->yxcd", wg, wg).reshape(patch * patch, SIFT_CELLS**2)
    _weight_cache[patch] = full
    return full


def _extract_windows(image: np.ndarray, centers: np.ndarray, patch: int) -> np.ndarray:
    """Stack the (patch, patch) windows centered at each grid point."""
    half = patch // 2
    y0 = centers[:, 1] - half
    x0 = centers[:, 0] - half
    if len(centers) == 0:
        return np.empty((0, patch, patch))
    from numpy.lib.stride_tricks import sliding_window_view

    views = sliding_window_view(image, (patch, patch))
    return views[y0, x0].astype(np.float64)


def _sift_descriptors(image: np.ndarray, centers: np.ndarray, patch: int) -> np.ndarray:
    """Upright SIFT descriptors for all centers of one gray image, unit L2 norm."""
    windows = _extract_windows(np.asarray(image, dtype=np.float64), centers, patch)
    n = len(windows)
    if n == 0:
        return np.zeros((0, SIFT_CELLS**2 * SIFT_ORIENTATIONS))
    gy, gx = np.gradient(windows, axis=(1, 2))
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)

    pos = theta * (SIFT_ORIENTATIONS / (2.0 * np.pi))
    lower = np.floor(pos)
    frac = pos - lower
    b0 = lower.astype(np.intp) % SIFT_ORIENTATIONS
    b1 = (b0 + 1) % SIFT_ORIENTATIONS

    flat = patch * patch
    hist = np.zeros((n, flat, SIFT_ORIENTATIONS))
    np.put_along_axis(hist, b0.reshape(n, flat, 1), (mag * (1.0 - frac)).reshape(n, flat, 1), axis=2)
    np.put_along_axis(hist, b1.reshape(n, flat, 1), (mag * frac).reshape(n, flat, 1), axis=2)

    weights = _spatial_weights(patch)
    desc = np.einsum("pfo,fc->pco", hist, weights).reshape(n, -1)

    norms = np.linalg.norm(desc, axis=1)
    nonzero = norms > 0
    desc[nonzero] /= norms[nonzero, None]
    np.clip(desc, None, SIFT_CLAMP, out=desc)
    norms = np.linalg.norm(desc, axis=1)
    desc[nonzero] /= norms[nonzero, None]
    return desc


def _as_gray(image: np.ndarray) -> np.ndarray:
    """Channel mean for 3-channel input; identity for 2-D input."""
    arr = np.asarray(image, dtype=np.float64)
    return arr.mean(axis=2) if arr.ndim == 3 else arr


def _opponent_channels(image: np.ndarray) -> list[np.ndarray]:
    arr = np.asarray(image, dtype=np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    return [
        (r - g) / np.sqrt(2.0),
        (r + g - 2.0 * b) / np.sqrt(6.0),
        (r + g + b) / np.sqrt(3.0),
    ]


def _channels_for(kind: str, image: np.ndarray) -> list[np.ndarray]:
    arr = np.asarray(image)
    if kind == "sift":
        return [_as_gray(arr)]
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{kind} requires a 3-channel image")
    if kind == "rgb_sift":
        return [arr[..., c].astype(np.float64) for c in range(3)]
    if kind == "opponent_sift":
        return _opponent_channels(arr)
    raise ValueError(f"unknown SIFT-family kind {kind!r}")


def sift_at(image: np.ndarray, center: tuple[int, int], patch: int = 16) -> np.ndarray:
    """128-dim upright SIFT at one patch center of a gray image."""
    centers = np.asarray([center], dtype=np.intp)
    return _sift_descriptors(_as_gray(image), centers, patch)[0]


def rgb_sift_at(image: np.ndarray, center: tuple[int, int], patch: int = 16) -> np.ndarray:
    """384-dim concatenation of per-channel SIFT on R, G, B."""
    centers = np.asarray([center], dtype=np.intp)
    parts = [_sift_descriptors(ch, centers, patch)[0] for ch in _channels_for("rgb_sift", image)]
    return np.concatenate(parts)


def opponent_sift_at(image: np.ndarray, center: tuple[int, int], patch: int = 16) -> np.ndarray:
    """384-dim concatenation of per-channel SIFT in opponent color space."""
    centers = np.asarray([center], dtype=np.intp)
    parts = [_sift_descriptors(ch, centers, patch)[0]
             for ch in _channels_for("opponent_sift", image)]
    return np.concatenate(parts)


def rgb_hist_at(image: np.ndarray, center: tuple[int, int], patch: int = 16,
                bins_per_channel: int = 4) -> np.ndarray:
    """Joint per-patch color histogram (default 4x4x4 = 64 bins), L1-normalized."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("rgb_hist requires a 3-channel image")
    half = patch // 2
    x, y = center
    window = arr[y - half: y - half + patch, x - half: x - half + patch].astype(np.float64)
    idx = np.minimum((window * bins_per_channel / 256.0).astype(np.intp), bins_per_channel - 1)
    joint = (idx[..., 0] * bins_per_channel + idx[..., 1]) * bins_per_channel + idx[..., 2]
    counts = np.bincount(joint.ravel(), minlength=bins_per_channel**3)
    return counts / counts.sum()


def _hist_descriptors(image: np.ndarray, centers: np.ndarray, patch: int,
                      bins_per_channel: int = 4) -> np.ndarray:
    rows = [rgb_hist_at(image, (int(x), int(y)), patch, bins_per_channel)
            for x, y in centers]
    return np.asarray(rows) if rows else np.zeros((0, bins_per_channel**3))


def extract(image, kind: str, grid: GridSpec = GridSpec()) -> LocalDescriptorSet:
    """Dense descriptors for a whole image.

    SIFT-family vectors are scaled by SIFT_CODEBOOK_SCALE and clipped to
    [0, 255] so codebook distances live on a fixed, sigma-compatible scale;
    rgb_hist values stay in [0, 1].
    """
    pixels = image.pixels if isinstance(image, RpImage) else np.asarray(image)
    h, w = pixels.shape[:2]
    centers = dense_grid((w, h), grid)
    if kind == "rgb_hist":
        desc = _hist_descriptors(pixels, centers, grid.patch)
    else:
        parts = [_sift_descriptors(ch, centers, grid.patch)
                 for ch in _channels_for(kind, pixels)]
        desc = np.concatenate(parts, axis=1)
        desc = np.minimum(desc * SIFT_CODEBOOK_SCALE, 255.0)
    return LocalDescriptorSet(
        image_size=(w, h),
        positions=centers,
        descriptors=desc.astype(np.float32),
        descriptor_kind=kind,
        patch=grid.patch,
    )


class DescriptorCache:
    """Optional on-disk cache of LocalDescriptorSets, keyed by sample, RP variant,
    descriptor kind, and grid configuration. Any config change changes the key."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, sample_id: str, variant: str, kind: str, grid: GridSpec) -> Path:
        key = f"v{CACHE_VERSION}|{sample_id}|{variant}|{kind}|{grid.stride}|{grid.patch}|{SIFT_CODEBOOK_SCALE}"
        digest = hashlib.sha256(key.encode()).hexdigest()[:24]
        return self.root / f"{digest}.npz"

    def get(self, sample_id: str, variant: str, kind: str, grid: GridSpec):
        path = self._path(sample_id, variant, kind, grid)
        if not path.exists():
            return None
        data = np.load(path)
        return LocalDescriptorSet(
            image_size=(int(data["width"]), int(data["height"])),
            positions=data["positions"],
            descriptors=data["descriptors"],
            descriptor_kind=str(data["kind"]),
            patch=int(data["patch"]),
        )

    def put(self, sample_id: str, variant: str, kind: str, grid: GridSpec,
            dset: LocalDescriptorSet) -> None:
        path = self._path(sample_id, variant, kind, grid)
        np.savez_compressed(
            path,
            width=dset.image_size[0],
            height=dset.image_size[1],
            positions=dset.positions,
            descriptors=dset.descriptors,
            kind=dset.descriptor_kind,
            patch=dset.patch,
        )
