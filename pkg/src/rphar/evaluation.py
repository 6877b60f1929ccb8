"""The evaluation protocol: balanced random splits, repeated runs, normalized
accuracy with Student-t confidence intervals, confusion matrices, and the
paired per-class significance test between two methods.

"Normalized accuracy" is the mean of per-class recalls (balanced accuracy):
the test split keeps the dataset's class imbalance, so plain accuracy would
let large classes dominate.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import baseline_features, bovw, classify, dense_descriptors, rp
from .errors import LengthError, ProtocolError
from .ingest import Dataset

log = logging.getLogger("rphar")

DEFAULT_PER_CLASS = 10
DEFAULT_RUNS = 10
DEFAULT_ALPHA = 0.05


def derive_seed(*parts: int) -> int:
    """Stable child seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def dataset_fingerprint(ds: Dataset) -> str:
    payload = "\n".join(f"{s.source_id}|{s.label}|{s.length}" for s in ds.samples)
    payload += "\n#classes:" + ",".join(ds.classes)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class SplitPlan:
    runs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]  # (train, test) per run
    per_class_train: int
    master_seed: int
    fingerprint: str

    @property
    def n_runs(self) -> int:
        return len(self.runs)


def make_splits(ds: Dataset, per_class: int = DEFAULT_PER_CLASS,
                runs: int = DEFAULT_RUNS, master_seed: int = 0) -> SplitPlan:
    """Per run: `per_class` training samples per class chosen without
    replacement, everything else as test. Deterministic in master_seed."""
    by_class: dict[str, list[int]] = {c: [] for c in ds.classes}
    for i, s in enumerate(ds.samples):
        by_class[s.label].append(i)
    for c, members in by_class.items():
        if len(members) <= per_class:
            raise ProtocolError(
                f"class {c!r} has {len(members)} samples; needs more than {per_class}"
            )
    plan_runs = []
    for r in range(runs):
        rng = np.random.default_rng([master_seed, r])
        train: set[int] = set()
        for c in ds.classes:
            members = np.asarray(by_class[c])
            train.update(members[rng.permutation(len(members))[:per_class]].tolist())
        test = tuple(i for i in range(len(ds.samples)) if i not in train)
        plan_runs.append((tuple(sorted(train)), test))
    digest = hashlib.sha256(json.dumps(
        [dataset_fingerprint(ds), per_class, master_seed, plan_runs]
    ).encode()).hexdigest()
    return SplitPlan(runs=tuple(plan_runs), per_class_train=per_class,
                     master_seed=master_seed, fingerprint=digest)


def normalized_accuracy(confusion: np.ndarray) -> float:
    """Mean per-class recall (diagonal over row sum)."""
    conf = np.asarray(confusion, dtype=np.float64)
    row_sums = conf.sum(axis=1)
    if np.any(row_sums == 0):
        raise ValueError("confusion matrix has a class with no test samples")
    return float(np.mean(np.diag(conf) / row_sums))


def confidence_interval(values, alpha: float = DEFAULT_ALPHA) -> tuple[float, float]:
    """Student-t interval: (mean, t_{1-alpha/2, n-1} * s / sqrt(n))."""
    from scipy.stats import t as student_t

    vals = np.asarray(values, dtype=np.float64)
    n = len(vals)
    if n < 2:
        raise ValueError("confidence interval needs at least 2 values")
    mean = float(vals.mean())
    s = float(vals.std(ddof=1))
    quantile = float(student_t.ppf(1.0 - alpha / 2.0, n - 1))
    return mean, quantile * s / np.sqrt(n)


@dataclass(frozen=True)
class EvalReport:
    method_id: str
    classes: tuple[str, ...]
    split_fingerprint: str
    master_seed: int
    per_class_train: int
    confusions: np.ndarray          # (runs, n_classes, n_classes) int
    per_class_accuracy: np.ndarray  # (runs, n_classes)
    normalized: np.ndarray          # (runs,)
    excluded: tuple[tuple[str, ...], ...]
    mean_normalized: float
    ci_half_width: Optional[float]  # None for single-run reports
    config: dict = field(default_factory=dict)

    @property
    def n_runs(self) -> int:
        return len(self.normalized)

    def mean_confusion(self) -> np.ndarray:
        return self.confusions.astype(np.float64).mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "method_id": self.method_id,
            "classes": list(self.classes),
            "split_fingerprint": self.split_fingerprint,
            "master_seed": self.master_seed,
            "per_class_train": self.per_class_train,
            "runs": [
                {
                    "confusion": self.confusions[r].tolist(),
                    "per_class_accuracy": self.per_class_accuracy[r].tolist(),
                    "normalized_accuracy": float(self.normalized[r]),
                    "excluded": list(self.excluded[r]),
                }
                for r in range(self.n_runs)
            ],
            "mean_normalized_accuracy": self.mean_normalized,
            "ci_half_width": self.ci_half_width,
            "config": self.config,
        }

    @staticmethod
    def from_dict(data: dict) -> "EvalReport":
        runs = data["runs"]
        return EvalReport(
            method_id=data["method_id"],
            classes=tuple(data["classes"]),
            split_fingerprint=data["split_fingerprint"],
            master_seed=data["master_seed"],
            per_class_train=data["per_class_train"],
            confusions=np.asarray([r["confusion"] for r in runs], dtype=np.int64),
            per_class_accuracy=np.asarray([r["per_class_accuracy"] for r in runs]),
            normalized=np.asarray([r["normalized_accuracy"] for r in runs]),
            excluded=tuple(tuple(r["excluded"]) for r in runs),
            mean_normalized=data["mean_normalized_accuracy"],
            ci_half_width=data["ci_half_width"],
            config=data.get("config", {}),
        )

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @staticmethod
    def load_json(path) -> "EvalReport":
        return EvalReport.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PairedTestResult:
    mean_diff: float
    half_width: float
    verdict: str                    # A_better | B_better | no_difference
    per_class_diff: tuple[float, ...]


def paired_class_test(report_a: EvalReport, report_b: EvalReport,
                      alpha: float = DEFAULT_ALPHA) -> PairedTestResult:
    """Paired test on the per-class accuracies averaged across runs.

    The sample is the vector of per-class differences; the verdict follows
    the t-interval: entirely above zero means A is better, entirely below
    means B is better, anything crossing zero is no statistical difference.
    """
    if report_a.split_fingerprint != report_b.split_fingerprint:
        raise ProtocolError("reports come from different split plans")
    if report_a.classes != report_b.classes:
        raise ProtocolError("reports disagree on the class list")
    a_c = report_a.per_class_accuracy.mean(axis=0)
    b_c = report_b.per_class_accuracy.mean(axis=0)
    diffs = a_c - b_c
    mean, hw = confidence_interval(diffs, alpha)
    if mean - hw > 0:
        verdict = "A_better"
    elif mean + hw < 0:
        verdict = "B_better"
    else:
        verdict = "no_difference"
    return PairedTestResult(mean_diff=mean, half_width=hw, verdict=verdict,
                            per_class_diff=tuple(float(d) for d in diffs))


# -- method specification and the experiment runner --------------------------

@dataclass(frozen=True)
class MethodSpec:
    """Names one feature path: a direct baseline descriptor, or an RP variant
    plus a dense descriptor and a BoVW configuration."""

    kind: str = "bovw"                      # "baseline" | "bovw"
    baseline_kind: str = "quantile"
    variant: str = "rgb"
    descriptor: str = "rgb_sift"
    k: int = 1000
    codebook_seed: int = 7
    rp_config: rp.RpConfig = rp.RpConfig()
    grid: dense_descriptors.GridSpec = dense_descriptors.GridSpec()
    bovw_config: bovw.BovwConfig = bovw.BovwConfig()

    def __post_init__(self):
        if self.kind not in ("baseline", "bovw"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind == "baseline" and self.baseline_kind not in baseline_features.BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.baseline_kind!r}")
        if self.kind == "bovw":
            if self.variant not in rp.VARIANTS:
                raise ValueError(f"unknown RP variant {self.variant!r}")
            if self.descriptor not in dense_descriptors.DESCRIPTOR_KINDS:
                raise ValueError(f"unknown descriptor {self.descriptor!r}")

    @property
    def method_id(self) -> str:
        if self.kind == "baseline":
            return f"baseline:{self.baseline_kind}"
        cfg = self.bovw_config
        assign = cfg.assignment if cfg.assignment == "hard" else f"soft(sigma={cfg.sigma:g})"
        pooling = cfg.pooling
        if cfg.pooling == "max_spm":
            pooling += "[" + ",".join(str(g) for g in cfg.levels) + "]"
        return f"rp_{self.variant}+{self.descriptor}+k{self.k}+{assign}+{pooling}"


def _extract_for_method(ds: Dataset, method: MethodSpec, jobs: int,
                        cache: Optional[dense_descriptors.DescriptorCache]):
    """Per-sample LocalDescriptorSets (None where the RP is too small)."""

    def one(sample):
        if cache is not None:
            hit = cache.get(sample.source_id, method.variant, method.descriptor, method.grid)
            if hit is not None:
                return hit
        try:
            image = rp.render_variant(sample, method.variant, method.rp_config)
            dset = dense_descriptors.extract(image, method.descriptor, method.grid)
        except LengthError as exc:
            log.warning("excluding %s: %s", sample.source_id, exc)
            return None
        if cache is not None:
            cache.put(sample.source_id, method.variant, method.descriptor, method.grid, dset)
        return dset

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_:
            return list(pool_.map(one, ds.samples))
    return [one(s) for s in ds.samples]


def _baseline_matrix(ds: Dataset, kind: str):
    feats = []
    for sample in ds.samples:
        try:
            feats.append(baseline_features.baseline_feature(sample, kind).values)
        except LengthError as exc:
            log.warning("excluding %s: %s", sample.source_id, exc)
            feats.append(None)
    return feats


def run_experiment(ds: Dataset, method: MethodSpec, plan: SplitPlan, *,
                   c_value: float = 1.0, svm_seed: int = 11, jobs: int = 1,
                   cache: Optional[dense_descriptors.DescriptorCache] = None) -> EvalReport:
    """Execute the full protocol for one method over a split plan.

    Codebooks (BoVW path) are built per run from training-split descriptors
    only; baseline features are z-scored with training-split statistics.
    """
    if plan.fingerprint != make_splits(
            ds, plan.per_class_train, plan.n_runs, plan.master_seed).fingerprint:
        raise ProtocolError("split plan does not match the dataset")

    n_classes = len(ds.classes)
    class_index = {c: j for j, c in enumerate(ds.classes)}
    labels = np.asarray([s.label for s in ds.samples])

    log.info("[%s] extracting features for %d samples", method.method_id, len(ds.samples))
    if method.kind == "baseline":
        per_sample = _baseline_matrix(ds, method.baseline_kind)
    else:
        per_sample = _extract_for_method(ds, method, jobs, cache)

    confusions = np.zeros((plan.n_runs, n_classes, n_classes), dtype=np.int64)
    per_class_acc = np.zeros((plan.n_runs, n_classes))
    normalized = np.zeros(plan.n_runs)
    excluded_ids = []

    for r, (train_ids, test_ids) in enumerate(plan.runs):
        train = [i for i in train_ids if per_sample[i] is not None]
        test = [i for i in test_ids if per_sample[i] is not None]
        excluded = tuple(ds.samples[i].source_id for i in (*train_ids, *test_ids)
                         if per_sample[i] is None)
        excluded_ids.append(excluded)
        if excluded:
            log.warning("run %d: %d samples excluded", r, len(excluded))

        if method.kind == "baseline":
            x_train = np.asarray([per_sample[i] for i in train])
            x_test = np.asarray([per_sample[i] for i in test])
            normalize = True
        else:
            pool_desc = np.concatenate([per_sample[i].descriptors for i in train])
            codebook = bovw.build_codebook(
                pool_desc, method.k, derive_seed(method.codebook_seed, plan.master_seed, r),
                descriptor_kind=method.descriptor)
            x_train = np.asarray([bovw.encode(per_sample[i], codebook, method.bovw_config)
                                  for i in train])
            x_test = np.asarray([bovw.encode(per_sample[i], codebook, method.bovw_config)
                                 for i in test])
            normalize = False

        model = classify.train(x_train, labels[train], c_value=c_value,
                               seed=derive_seed(svm_seed, plan.master_seed, r),
                               normalize=normalize)
        predicted = classify.predict_batch(model, x_test)

        conf = np.zeros((n_classes, n_classes), dtype=np.int64)
        for true_label, pred_label in zip(labels[test], predicted):
            conf[class_index[true_label], class_index[pred_label]] += 1
        confusions[r] = conf
        row_sums = conf.sum(axis=1)
        if np.any(row_sums == 0):
            missing = [ds.classes[j] for j in np.flatnonzero(row_sums == 0)]
            raise ProtocolError(f"run {r}: no test samples left for classes {missing}")
        per_class_acc[r] = np.diag(conf) / row_sums
        normalized[r] = normalized_accuracy(conf)
        log.info("[%s] run %d: normalized accuracy %.4f", method.method_id, r, normalized[r])

    if plan.n_runs >= 2:
        mean, hw = confidence_interval(normalized)
    else:
        mean, hw = float(normalized[0]), None
    return EvalReport(
        method_id=method.method_id,
        classes=ds.classes,
        split_fingerprint=plan.fingerprint,
        master_seed=plan.master_seed,
        per_class_train=plan.per_class_train,
        confusions=confusions,
        per_class_accuracy=per_class_acc,
        normalized=normalized,
        excluded=tuple(excluded_ids),
        mean_normalized=mean,
        ci_half_width=hw,
        config={"c_value": c_value, "svm_seed": svm_seed},
    )
