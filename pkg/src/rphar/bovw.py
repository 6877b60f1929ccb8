"""Bag-of-visual-words encoding: random-selection codebooks, hard or soft
(codeword-uncertainty) assignment, and average / max / spatial-pyramid pooling.

Soft assignment spreads each descriptor over all words with Gaussian kernel
weights K(t) = exp(-t^2 / (2 sigma^2)) of the Euclidean distance, normalized
to sum to 1. Spatial-pyramid max pooling (default grids 1x1, 2x2, 4x4)
concatenates per-cell maxima, so k words yield (1+4+16)k dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ASSIGNMENTS = ("hard", "soft")
POOLINGS = ("average", "max", "max_spm")
DEFAULT_SPM_LEVELS = (1, 2, 4)


@dataclass(frozen=True)
class Codebook:
    words: np.ndarray            # (k, dim)
    descriptor_kind: str
    seed: int

    def __post_init__(self):
        if self.words.ndim != 2 or len(self.words) < 1:
            raise ValueError("codebook needs a (k, dim) array with k >= 1")

    @property
    def k(self) -> int:
        return len(self.words)

    @property
    def dim(self) -> int:
        return self.words.shape[1]


@dataclass(frozen=True)
class BovwConfig:
    assignment: str = "soft"
    sigma: float = 150.0
    pooling: str = "max_spm"
    levels: tuple[int, ...] = DEFAULT_SPM_LEVELS

    def __post_init__(self):
        if self.assignment not in ASSIGNMENTS:
            raise ValueError(f"assignment must be one of {ASSIGNMENTS}")
        if self.assignment == "soft" and not self.sigma > 0:
            raise ValueError("soft assignment needs sigma > 0")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}")
        if self.pooling == "max_spm" and (not self.levels or min(self.levels) < 1):
            raise ValueError("spatial pyramid levels must be non-empty, each >= 1")

    def feature_dim(self, k: int) -> int:
        if self.pooling == "max_spm":
            return k * sum(g * g for g in self.levels)
        return k


def build_codebook(pool: np.ndarray, k: int, seed: int, descriptor_kind: str = "sift") -> Codebook:
    """Select k distinct descriptors from the pool, uniformly without replacement.

    Duplicate rows in the pool are skipped (redraw) until k distinct words
    are found; if the pool holds fewer than k distinct rows, raise.
    """
    pool = np.asarray(pool)
    if len(pool) < k:
        raise ValueError(f"descriptor pool of {len(pool)} smaller than k={k}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pool))
    chosen, seen = [], set()
    for idx in order:
        key = pool[idx].tobytes()
        if key in seen:
            continue
        seen.add(key)
        chosen.append(idx)
        if len(chosen) == k:
            break
    if len(chosen) < k:
        raise ValueError(f"pool holds only {len(chosen)} distinct descriptors, need k={k}")
    return Codebook(words=pool[np.array(chosen)].copy(), descriptor_kind=descriptor_kind, seed=seed)


def _sq_distances(descriptors: np.ndarray, words: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(descriptors.astype(np.float64) ** 2, axis=1)[:, None]
        + np.sum(words.astype(np.float64) ** 2, axis=1)[None, :]
        - 2.0 * descriptors.astype(np.float64) @ words.astype(np.float64).T
    )
    return np.maximum(d2, 0.0)


def assign_batch(descriptors: np.ndarray, codebook: Codebook,
                 assignment: str = "hard", sigma: float | None = None) -> np.ndarray:
    """(n, k) assignment weights for a stack of descriptors."""
    descriptors = np.atleast_2d(np.asarray(descriptors))
    if descriptors.shape[1] != codebook.dim:
        raise ValueError(
            f"descriptor dim {descriptors.shape[1]} != codebook dim {codebook.dim}"
        )
    sq = _sq_distances(descriptors, codebook.words)
    if assignment == "hard":
        weights = np.zeros_like(sq)
        weights[np.arange(len(sq)), np.argmin(sq, axis=1)] = 1.0
        return weights
    if assignment != "soft":
        raise ValueError(f"assignment must be one of {ASSIGNMENTS}")
    if sigma is None or not sigma > 0:
        raise ValueError("soft assignment needs sigma > 0")
    # max-shifted exponents keep the largest kernel at exp(0) = 1
    expo = -sq / (2.0 * sigma * sigma)
    expo -= expo.max(axis=1, keepdims=True)
    weights = np.exp(expo)
    totals = weights.sum(axis=1, keepdims=True)
    dead = totals[:, 0] == 0.0
    if np.any(dead):
        # all kernels underflowed: fall back to hard assignment for those rows
        weights[dead] = 0.0
        weights[dead, np.argmin(sq[dead], axis=1)] = 1.0
        totals[dead] = 1.0
    return weights / totals


def assign(descriptor: np.ndarray, codebook: Codebook,
           assignment: str = "hard", sigma: float | None = None) -> np.ndarray:
    """Weight vector over the k words for a single descriptor."""
    return assign_batch(descriptor[None, :], codebook, assignment, sigma)[0]


def pool(assignments: np.ndarray, points: np.ndarray, image_size: tuple[int, int],
         cfg: BovwConfig) -> np.ndarray:
    """Pool per-point assignment weights into one image-level vector."""
    assignments = np.asarray(assignments)
    if assignments.size == 0:
        raise ValueError("cannot pool an empty assignment list (descriptorless image)")
    if cfg.pooling == "average":
        return assignments.mean(axis=0)
    if cfg.pooling == "max":
        return assignments.max(axis=0)

    points = np.asarray(points)
    w, h = image_size
    k = assignments.shape[1]
    blocks = []
    for g in cfg.levels:
        cx = np.minimum((g * points[:, 0]) // w, g - 1).astype(np.intp)
        cy = np.minimum((g * points[:, 1]) // h, g - 1).astype(np.intp)
        cell = cy * g + cx
        level = np.zeros((g * g, k), dtype=assignments.dtype)
        for c in np.unique(cell):
            level[c] = assignments[cell == c].max(axis=0)
        blocks.append(level.reshape(-1))
    return np.concatenate(blocks)


def encode(descriptor_set, codebook: Codebook, cfg: BovwConfig) -> np.ndarray:
    """Assign + pool one image's LocalDescriptorSet into its BoVW vector."""
    weights = assign_batch(descriptor_set.descriptors, codebook, cfg.assignment, cfg.sigma)
    return pool(weights, descriptor_set.positions, descriptor_set.image_size, cfg)


def save_codebook(codebook: Codebook, path) -> None:
    np.savez_compressed(
        Path(path),
        version=1,
        words=codebook.words,
        kind=codebook.descriptor_kind,
        seed=codebook.seed,
    )


def load_codebook(path) -> Codebook:
    data = np.load(Path(path))
    if int(data["version"]) != 1:
        raise ValueError(f"unsupported codebook version {data['version']}")
    return Codebook(words=data["words"], descriptor_kind=str(data["kind"]), seed=int(data["seed"]))
