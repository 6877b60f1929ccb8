"""Linear multi-class SVM: one-vs-rest hinge-loss classifiers with optional
per-dimension z-scoring learned from the training split.

Training is delegated to liblinear (hinge loss + L2, deterministic for a
fixed seed); prediction is a plain argmax over per-class decision values
with ties resolved to the lowest class index.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class LinearModel:
    classes: tuple[str, ...]
    weights: np.ndarray                  # (n_classes, dim)
    biases: np.ndarray                   # (n_classes,)
    c_value: float
    seed: int
    norm_mean: Optional[np.ndarray] = None
    norm_std: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, np.ndarray):
        mat = features
    else:
        rows = [f.values if hasattr(f, "values") else np.asarray(f) for f in features]
        dims = {len(r) for r in rows}
        if len(dims) > 1:
            raise ValueError(f"feature vectors disagree in dimension: {sorted(dims)}")
        mat = np.asarray(rows)
    return np.asarray(mat, dtype=np.float64)


def train(features, labels: Sequence[str], c_value: float = 1.0, seed: int = 0,
          normalize: bool = False, max_iter: int = 5000) -> LinearModel:
    """Fit one-vs-rest linear SVMs (hinge loss + L2) on the given samples."""
    from sklearn.svm import LinearSVC
    from sklearn.exceptions import ConvergenceWarning

    x = _as_matrix(features)
    y = np.asarray(list(labels))
    if len(x) != len(y):
        raise ValueError(f"{len(x)} feature rows but {len(y)} labels")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise ValueError("training needs at least 2 classes")

    mean = std = None
    if normalize:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        x = (x - mean) / std

    svc = LinearSVC(C=c_value, loss="hinge", dual=True, random_state=seed,
                    max_iter=max_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        svc.fit(x, y)

    if len(classes) == 2:
        # liblinear keeps a single separator for binary problems; expand it
        # to per-class rows so prediction is a uniform argmax
        weights = np.vstack([-svc.coef_[0], svc.coef_[0]])
        biases = np.array([-svc.intercept_[0], svc.intercept_[0]])
    else:
        weights = svc.coef_.copy()
        biases = svc.intercept_.copy()
    assert tuple(svc.classes_) == classes
    return LinearModel(classes=classes, weights=weights, biases=biases,
                       c_value=c_value, seed=seed, norm_mean=mean, norm_std=std)


def decision_scores(model: LinearModel, features) -> np.ndarray:
    """(n, n_classes) decision values, after any stored z-scoring."""
    x = _as_matrix(features)
    if x.shape[1] != model.dim:
        raise ValueError(f"feature dim {x.shape[1]} != model dim {model.dim}")
    if model.norm_mean is not None:
        x = (x - model.norm_mean) / model.norm_std
    return x @ model.weights.T + model.biases


def predict(model: LinearModel, feature) -> tuple[str, np.ndarray]:
    """Predicted class (argmax of decision values, ties to lowest index) + scores."""
    scores = decision_scores(model, np.atleast_2d(np.asarray(feature, dtype=np.float64)))[0]
    return model.classes[int(np.argmax(scores))], scores


def predict_batch(model: LinearModel, features) -> np.ndarray:
    scores = decision_scores(model, features)
    return np.asarray(model.classes, dtype=object)[np.argmax(scores, axis=1)]


def hinge_objective(model: LinearModel, features, labels: Sequence[str]) -> float:
    """Mean hinge loss of the one-vs-rest problems (diagnostic for convergence)."""
    scores = decision_scores(model, features)
    y = np.asarray(list(labels))
    total = 0.0
    for j, cls in enumerate(model.classes):
        sign = np.where(y == cls, 1.0, -1.0)
        total += np.mean(np.maximum(0.0, 1.0 - sign * scores[:, j]))
    return total / len(model.classes)


def save_model(model: LinearModel, path) -> None:
    np.savez_compressed(
        Path(path),
        version=1,
        classes=np.asarray(model.classes, dtype=object),
        weights=model.weights,
        biases=model.biases,
        c_value=model.c_value,
        seed=model.seed,
        normalized=model.norm_mean is not None,
        norm_mean=model.norm_mean if model.norm_mean is not None else np.zeros(0),
        norm_std=model.norm_std if model.norm_std is not None else np.zeros(0),
    )


def load_model(path) -> LinearModel:
    data = np.load(Path(path), allow_pickle=True)
    if int(data["version"]) != 1:
        raise ValueError(f"unsupported model version {data['version']}")
    normalized = bool(data["normalized"])
    return LinearModel(
        classes=tuple(str(c) for c in data["classes"]),
        weights=data["weights"],
        biases=data["biases"],
        c_value=float(data["c_value"]),
        seed=int(data["seed"]),
        norm_mean=data["norm_mean"] if normalized else None,
        norm_std=data["norm_std"] if normalized else None,
    )
