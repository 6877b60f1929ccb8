"""Time- and frequency-domain feature vectors computed directly from sensor axes.

Time-domain kinds: mean, std, rms, quantile (21 probabilities), histogram
(16 bins per axis), covariance (Pearson correlation of axis pairs).
Frequency-domain: mean magnitude over 10 contiguous spectrum bands per axis,
with interchangeable fft / direct-dft backends that must agree numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthError
from .ingest import SensorSample

TIME_KINDS = ("mean", "std", "rms", "quantile", "histogram", "covariance")

QUANTILE_PROBS = np.linspace(0.0, 1.0, 21)
HISTOGRAM_BINS = 16
DEFAULT_BANDS = 10

# feature dimensionality per descriptor_id (3 axes throughout)
FEATURE_DIMS = {
    "mean": 3,
    "std": 3,
    "rms": 3,
    "quantile": 63,
    "histogram": 48,
    "covariance": 3,
    "fft_bands": 30,
    "dft_bands": 30,
}


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    descriptor_id: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.descriptor_id}: non-finite feature values")

    @property
    def dim(self) -> int:
        return len(self.values)


def _axis_histogram(axis: np.ndarray) -> np.ndarray:
    lo, hi = axis.min(), axis.max()
    if hi == lo:
        # degenerate range: all mass in the first bin
        freqs = np.zeros(HISTOGRAM_BINS)
        freqs[0] = 1.0
        return freqs
    counts, _ = np.histogram(axis, bins=HISTOGRAM_BINS, range=(lo, hi))
    return counts / counts.sum()


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation; zero-variance inputs give 0 rather than NaN."""
    sa, sb = a.std(ddof=1), b.std(ddof=1)
    if sa == 0.0 or sb == 0.0:
        return 0.0
    cov = np.mean((a - a.mean()) * (b - b.mean())) * len(a) / (len(a) - 1)
    return float(cov / (sa * sb))


def time_feature(sample: SensorSample, kind: str) -> FeatureVector:
    """Compute one time-domain feature family over the three axes."""
    if kind not in TIME_KINDS:
        raise ValueError(f"unknown time feature kind {kind!r}")
    axes = [np.asarray(a, dtype=np.float64) for a in sample.axes]
    n = len(axes[0])
    if kind in ("std", "covariance") and n < 2:
        raise LengthError(f"{kind} needs at least 2 samples, got {n}")

    if kind == "mean":
        values = np.array([a.mean() for a in axes])
    elif kind == "std":
        values = np.array([a.std(ddof=1) for a in axes])
    elif kind == "rms":
        values = np.array([np.sqrt(np.mean(a**2)) for a in axes])
    elif kind == "quantile":
        values = np.concatenate([np.quantile(a, QUANTILE_PROBS) for a in axes])
    elif kind == "histogram":
        values = np.concatenate([_axis_histogram(a) for a in axes])
    else:  # covariance: Pearson correlation of the xy, xz, yz pairs
        x, y, z = axes
        values = np.array([_pearson(x, y), _pearson(x, z), _pearson(y, z)])
    return FeatureVector(values=values, descriptor_id=kind)


def magnitude_spectrum(series: np.ndarray, algorithm: str = "fft") -> np.ndarray:
    """First floor(N/2)+1 magnitudes of the discrete Fourier transform.

    `fft` uses the library FFT; `dft` evaluates the exponential sums directly.
    The two are the same transform and must agree to numerical precision.
    """
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    half = n // 2 + 1
    if algorithm == "fft":
        return np.abs(np.fft.rfft(x))
    if algorithm == "dft":
        k = np.arange(half)[:, None]
        t = np.arange(n)[None, :]
        basis = np.exp(-2j * np.pi * k * t / n)
        return np.abs(basis @ x)
    raise ValueError(f"unknown transform algorithm {algorithm!r}")


def band_slices(length: int, n_bands: int) -> list[slice]:
    """Contiguous bands with boundaries at round(i * length / n_bands)."""
    bounds = [int(round(i * length / n_bands)) for i in range(n_bands + 1)]
    return [slice(bounds[i], bounds[i + 1]) for i in range(n_bands)]


def spectrum_bands(sample: SensorSample, n_bands: int = DEFAULT_BANDS,
                   algorithm: str = "fft") -> FeatureVector:
    """Mean spectrum magnitude over `n_bands` contiguous bands, per axis."""
    n = sample.length
    if n < n_bands:
        raise LengthError(f"need at least {n_bands} samples for {n_bands} bands, got {n}")
    parts = []
    for axis in sample.axes:
        mags = magnitude_spectrum(np.asarray(axis, dtype=np.float64), algorithm)
        parts.append([mags[s].mean() for s in band_slices(len(mags), n_bands)])
    return FeatureVector(values=np.concatenate(parts), descriptor_id=f"{algorithm}_bands")


BASELINE_KINDS = TIME_KINDS + ("fft_bands", "dft_bands")


def baseline_feature(sample: SensorSample, kind: str) -> FeatureVector:
    """Dispatch any baseline descriptor_id (time kinds plus fft_bands / dft_bands)."""
    if kind in TIME_KINDS:
        return time_feature(sample, kind)
    if kind in ("fft_bands", "dft_bands"):
        return spectrum_bands(sample, algorithm=kind.split("_")[0])
    raise ValueError(f"unknown baseline feature kind {kind!r}")
