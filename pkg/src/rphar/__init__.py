"""rphar: activity recognition from inertial sensors via recurrence-plot
textures, dense visual descriptors, and bag-of-visual-words classification."""

from .bovw import BovwConfig, Codebook, build_codebook
from .classify import LinearModel, predict, train
from .dense_descriptors import GridSpec, LocalDescriptorSet, dense_grid, extract
from .evaluation import (
    EvalReport,
    MethodSpec,
    SplitPlan,
    confidence_interval,
    make_splits,
    normalized_accuracy,
    paired_class_test,
    run_experiment,
)
from .ingest import (
    Dataset,
    SensorSample,
    decode_coded,
    filter_classes,
    load_csv_dataset,
    load_wharf,
)
from .rp import RpConfig, RpImage, rp_gray, rp_gray_concat, rp_rgb

__version__ = "0.1.0"

__all__ = [
    "BovwConfig", "Codebook", "build_codebook",
    "LinearModel", "predict", "train",
    "GridSpec", "LocalDescriptorSet", "dense_grid", "extract",
    "EvalReport", "MethodSpec", "SplitPlan", "confidence_interval",
    "make_splits", "normalized_accuracy", "paired_class_test", "run_experiment",
    "Dataset", "SensorSample", "decode_coded", "filter_classes",
    "load_csv_dataset", "load_wharf",
    "RpConfig", "RpImage", "rp_gray", "rp_gray_concat", "rp_rgb",
]
