"""Dataset ingestion: WHARF raw files and the canonical CSV interchange format.

WHARF recordings are plain-text files of whitespace-separated coded integer
triplets (one line per 32 Hz tick, one column per axis). Codes are 6-bit
values covering [-1.5g, +1.5g]; :func:`decode_coded` maps them to m/s^2.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParseError

GRAVITY = 9.81
CODED_MIN = 0
CODED_MAX = 63
WHARF_SAMPLE_RATE_HZ = 32.0

AXIS_NAMES = ("x", "y", "z")

# WHARF file stems look like Accelerometer-2011-03-24-09-54-39-brush_teeth-f1
_WHARF_STEM = re.compile(
    r"^Accelerometer-\d{4}(?:-\d{2}){5}-(?P<label>.+?)-(?P<subject>[^-]+)$"
)


@dataclass(frozen=True)
class SensorSample:
    """One recording: three equal-length axis sequences in m/s^2."""

    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    label: str
    source_id: str
    sample_rate_hz: float = WHARF_SAMPLE_RATE_HZ

    def __post_init__(self):
        if len(self.axes) != 3:
            raise DataError(f"{self.source_id}: expected 3 axes, got {len(self.axes)}")
        lengths = {len(a) for a in self.axes}
        if len(lengths) != 1 or min(lengths) < 1:
            raise DataError(f"{self.source_id}: axis lengths differ or are empty: {lengths}")
        if self.sample_rate_hz <= 0:
            raise DataError(f"{self.source_id}: sample_rate_hz must be positive")

    @property
    def length(self) -> int:
        return len(self.axes[0])

    def as_array(self) -> np.ndarray:
        """Return a (length, 3) float array of the axis values."""
        return np.stack(self.axes, axis=1)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[SensorSample, ...]
    classes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise DataError("duplicate entries in class list")
        known = set(self.classes)
        for s in self.samples:
            if s.label not in known:
                raise DataError(f"sample {s.source_id} has label {s.label!r} not in class list")

    @staticmethod
    def from_samples(samples: Iterable[SensorSample]) -> "Dataset":
        samples = tuple(samples)
        classes = tuple(sorted({s.label for s in samples}))
        return Dataset(samples=samples, classes=classes)

    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.classes}
        for s in self.samples:
            counts[s.label] += 1
        return counts

    def __len__(self) -> int:
        return len(self.samples)


def normalize_label(raw: str) -> str:
    """Normalize a file- or directory-derived label to lowercase snake_case."""
    cleaned = re.sub(r"[^0-9a-zA-Z]+", "_", raw.strip())
    return cleaned.strip("_").lower()


def decode_coded(coded):
    """Map 6-bit WHARF codes onto [-1.5g, +1.5g] m/s^2 (affine, monotone)."""
    arr = np.asarray(coded)
    if arr.size and (arr.min() < CODED_MIN or arr.max() > CODED_MAX):
        raise DataError(f"coded value outside [{CODED_MIN}, {CODED_MAX}]")
    decoded = -1.5 * GRAVITY + arr * (3.0 * GRAVITY / CODED_MAX)
    return float(decoded) if np.isscalar(coded) else decoded


def _parse_wharf_file(path: Path) -> np.ndarray:
    """Parse one WHARF file into an (n, 3) int array of coded values."""
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 values, got {len(tokens)}")
        try:
            rows.append([int(t) for t in tokens])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-integer token in {tokens!r}") from exc
    if not rows:
        raise DataError(f"{path}: no samples in file")
    coded = np.array(rows, dtype=np.int64)
    if coded.min() < CODED_MIN or coded.max() > CODED_MAX:
        bad = coded[(coded < CODED_MIN) | (coded > CODED_MAX)][0]
        raise DataError(f"{path}: coded value {bad} outside [{CODED_MIN}, {CODED_MAX}]")
    return coded


def _label_for(path: Path, root: Path) -> tuple[str, str]:
    """Derive (label, source_id) from a WHARF file location or name."""
    rel = path.relative_to(root)
    if len(rel.parts) > 1:
        label = rel.parts[0]
    else:
        m = _WHARF_STEM.match(path.stem)
        label = m.group("label") if m else path.stem
    return normalize_label(label), str(rel.with_suffix(""))


def load_wharf(root) -> Dataset:
    """Load a WHARF directory tree into a decoded Dataset.

    Class labels come from the per-class subdirectory when present,
    otherwise from the standard WHARF file-name pattern.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".txt")
    samples = []
    for path in files:
        coded = _parse_wharf_file(path)
        label, source_id = _label_for(path, root)
        axes = tuple(decode_coded(coded[:, i]) for i in range(3))
        samples.append(SensorSample(axes=axes, label=label, source_id=source_id))
    return Dataset.from_samples(samples)


def filter_classes(ds: Dataset, drop: Sequence[str]) -> Dataset:
    """Drop all samples whose label is in `drop`; absent classes are a no-op."""
    dropset = {normalize_label(c) for c in drop}
    kept = [s for s in ds.samples if s.label not in dropset]
    return Dataset.from_samples(kept)


# -- canonical CSV interchange: header label,x,y,z, one sample per file --

def _safe_stem(source_id: str) -> str:
    return re.sub(r"[^0-9a-zA-Z_.-]+", "__", source_id)


def save_csv_dataset(ds: Dataset, outdir) -> list[Path]:
    """Write one `label,x,y,z` CSV per sample; values round-trip exactly."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, s in enumerate(ds.samples):
        path = outdir / f"{i:04d}__{_safe_stem(s.source_id)}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "x", "y", "z"])
            for x, y, z in zip(*s.axes):
                w.writerow([s.label, repr(float(x)), repr(float(y)), repr(float(z))])
        written.append(path)
    return written


def load_csv_dataset(root, sample_rate_hz: float = WHARF_SAMPLE_RATE_HZ) -> Dataset:
    """Load a directory of canonical interchange CSVs."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    samples = []
    for path in sorted(root.glob("*.csv")):
        labels, cols = set(), ([], [], [])
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["label", "x", "y", "z"]:
                raise ParseError(f"{path}:1: expected header label,x,y,z, got {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
                labels.add(row[0])
                try:
                    for c, tok in zip(cols, row[1:]):
                        c.append(float(tok))
                except ValueError as exc:
                    raise ParseError(f"{path}:{lineno}: non-numeric value in {row!r}") from exc
        if len(labels) != 1:
            raise DataError(f"{path}: expected a single label per file, got {sorted(labels)}")
        axes = tuple(np.array(c, dtype=np.float64) for c in cols)
        samples.append(SensorSample(axes=axes, label=labels.pop(), source_id=path.stem,
                                    sample_rate_hz=sample_rate_hz))
    return Dataset.from_samples(samples)
