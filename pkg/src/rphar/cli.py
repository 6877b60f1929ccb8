"""Command-line surface: ingest, render-rp, extract, run, compare, report.

One flat key=value config file drives the pipeline; command-line flags
override file values, and --sweep expands comma-separated alternatives
into a cross-product of runs. All randomness flows from the seeds declared
in the config, so a config file fully determines its outputs.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 protocol error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import baseline_features, bovw, dense_descriptors, evaluation, ingest, rp
from .errors import ConfigError, DataError, ProtocolError

log = logging.getLogger("rphar")

CACHE_ENV_VAR = "RPHAR_CACHE_DIR"


# -- experiment configuration -------------------------------------------------

def _parse_opt_float(text: str):
    return None if text.lower() in ("none", "") else float(text)


def _parse_str_tuple(text: str):
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _parse_int_tuple(text: str):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "str": str,
    "int": int,
    "float": float,
    "opt_float": _parse_opt_float,
    "str_tuple": _parse_str_tuple,
    "int_tuple": _parse_int_tuple,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; defaults are the best-performing setup
    (RGB plots + RGB-SIFT + 1000-word soft maxSPM BoVW, 10 runs x 10/class)."""

    dataset: str = ""
    format: str = "wharf"               # wharf | csv
    drop: tuple[str, ...] = ("eat_meat", "eat_soup")
    method: str = "bovw"                # bovw | baseline
    baseline_kind: str = "quantile"
    rp_variant: str = "rgb"
    rp_m: int = 2
    rp_d: int = 2
    rp_epsilon: float | None = None
    rp_polarity: str = "dark_recurrent"
    descriptor: str = "rgb_sift"
    grid_stride: int = 6
    grid_patch: int = 16
    k: int = 1000
    codebook_seed: int = 7
    assignment: str = "soft"
    sigma: float = 150.0
    pooling: str = "max_spm"
    spm_levels: tuple[int, ...] = (1, 2, 4)
    svm_c: float = 1.0
    svm_seed: int = 11
    per_class: int = 10
    runs: int = 10
    master_seed: int = 0
    jobs: int = 1
    output: str = "rphar-out"


_FIELD_KINDS = {
    "dataset": "str", "format": "str", "drop": "str_tuple", "method": "str",
    "baseline_kind": "str", "rp_variant": "str", "rp_m": "int", "rp_d": "int",
    "rp_epsilon": "opt_float", "rp_polarity": "str", "descriptor": "str",
    "grid_stride": "int", "grid_patch": "int", "k": "int", "codebook_seed": "int",
    "assignment": "str", "sigma": "float", "pooling": "str", "spm_levels": "int_tuple",
    "svm_c": "float", "svm_seed": "int", "per_class": "int", "runs": "int",
    "master_seed": "int", "jobs": "int", "output": "str",
}


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = [f"{f.name} = {_fmt(getattr(cfg, f.name))}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


def config_from_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        try:
            updates[key] = _PARSERS[_FIELD_KINDS[key]](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return replace(cfg, **updates)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return config_from_text(text)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:16]


def apply_overrides(cfg: ExperimentConfig, pairs: list[str]) -> ExperimentConfig:
    """Apply key=value override strings (CLI flags beat file values)."""
    text = "\n".join(pairs)
    return config_from_text(text, base=cfg)


def method_from_config(cfg: ExperimentConfig) -> evaluation.MethodSpec:
    try:
        return evaluation.MethodSpec(
            kind=cfg.method,
            baseline_kind=cfg.baseline_kind,
            variant=cfg.rp_variant,
            descriptor=cfg.descriptor,
            k=cfg.k,
            codebook_seed=cfg.codebook_seed,
            rp_config=rp.RpConfig(m=cfg.rp_m, d=cfg.rp_d, epsilon=cfg.rp_epsilon,
                                  polarity=cfg.rp_polarity),
            grid=dense_descriptors.GridSpec(stride=cfg.grid_stride, patch=cfg.grid_patch),
            bovw_config=bovw.BovwConfig(assignment=cfg.assignment, sigma=cfg.sigma,
                                        pooling=cfg.pooling, levels=cfg.spm_levels),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_dataset(cfg: ExperimentConfig) -> ingest.Dataset:
    if not cfg.dataset:
        raise ConfigError("config has no dataset path")
    if cfg.format == "wharf":
        ds = ingest.load_wharf(cfg.dataset)
    elif cfg.format == "csv":
        ds = ingest.load_csv_dataset(cfg.dataset)
    else:
        raise ConfigError(f"unknown dataset format {cfg.format!r}")
    if cfg.drop:
        ds = ingest.filter_classes(ds, cfg.drop)
    return ds


# -- figures -------------------------------------------------------------------

def save_confusion_png(report: evaluation.EvalReport, path) -> None:
    """Row-normalized mean confusion matrix as a heatmap."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    conf = report.mean_confusion()
    conf = conf / np.maximum(conf.sum(axis=1, keepdims=True), 1e-12)
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(conf, cmap="viridis", vmin=0.0, vmax=1.0)
    ticks = np.arange(len(report.classes))
    ax.set_xticks(ticks, report.classes, rotation=90, fontsize=7)
    ax.set_yticks(ticks, report.classes, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(report.method_id, fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_compare_png(result: evaluation.PairedTestResult, label_a: str, label_b: str,
                     path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar([0], [result.mean_diff], yerr=[result.half_width], capsize=8, width=0.4)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks([0], [f"{label_a}\nvs\n{label_b}"], fontsize=7)
    ax.set_ylabel("per-class accuracy difference")
    ax.set_title(result.verdict)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# -- commands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.format == "wharf":
        ds = ingest.load_wharf(args.input)
    else:
        ds = ingest.load_csv_dataset(args.input)
    if args.drop:
        ds = ingest.filter_classes(ds, _parse_str_tuple(args.drop))
    outdir = Path(args.out)
    ingest.save_csv_dataset(ds, outdir)
    counts = ds.class_counts()
    lengths = [s.length for s in ds.samples]
    manifest = {
        "classes": list(ds.classes),
        "class_counts": counts,
        "n_samples": len(ds),
        "length_min": int(min(lengths)) if lengths else 0,
        "length_max": int(max(lengths)) if lengths else 0,
        "fingerprint": evaluation.dataset_fingerprint(ds),
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    print(f"{'#':>3} {'class':<20} {'size':>5}")
    for i, c in enumerate(ds.classes, start=1):
        print(f"{i:>3} {c:<20} {counts[c]:>5}")
    print(f"    total samples: {len(ds)}  classes: {len(ds.classes)}")
    return 0


def cmd_render_rp(args) -> int:
    cfg = rp.RpConfig(m=args.m, d=args.d, epsilon=args.epsilon, polarity=args.polarity)
    ds = ingest.load_csv_dataset(args.dataset) if args.format == "csv" \
        else ingest.load_wharf(args.dataset)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    per_class: dict[str, list[Path]] = {}
    rendered = 0
    for sample in ds.samples:
        if args.limit and len(per_class.get(sample.label, [])) >= args.limit:
            continue
        try:
            image = rp.render_variant(sample, args.variant, cfg)
        except Exception as exc:  # too-short samples: warn and continue
            log.warning("skipping %s: %s", sample.source_id, exc)
            continue
        stem = sample.source_id.replace("/", "__")
        path = outdir / f"{stem}.{args.variant}.png"
        rp.save_png(image, path)
        per_class.setdefault(sample.label, []).append(path)
        rendered += 1
    if args.gallery:
        _write_galleries(per_class, outdir, args.variant)
    print(f"rendered {rendered} plots to {outdir}")
    return 0


def _write_galleries(per_class: dict, outdir: Path, variant: str, thumb: int = 96) -> None:
    from PIL import Image

    for label, paths in sorted(per_class.items()):
        tiles = [Image.open(p).resize((thumb, thumb)) for p in paths[:8]]
        sheet = Image.new("RGB", (thumb * len(tiles), thumb), "white")
        for i, tile in enumerate(tiles):
            sheet.paste(tile.convert("RGB"), (i * thumb, 0))
        sheet.save(outdir / f"gallery_{label}.{variant}.png")


def cmd_extract(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args.set or [])
    ds = load_dataset(cfg)
    method = method_from_config(cfg)
    outpath = Path(args.out)

    rows, ids, labels = [], [], []
    if method.kind == "baseline":
        for s in ds.samples:
            rows.append(baseline_features.baseline_feature(s, method.baseline_kind).values)
            ids.append(s.source_id)
            labels.append(s.label)
        descriptor_id = method.baseline_kind
    else:
        cache = _cache_from(args)
        per_sample = evaluation._extract_for_method(ds, method, cfg.jobs, cache)
        usable = [i for i, d in enumerate(per_sample) if d is not None]
        pool = np.concatenate([per_sample[i].descriptors for i in usable])
        codebook = bovw.build_codebook(pool, method.k, method.codebook_seed,
                                       descriptor_kind=method.descriptor)
        for i in usable:
            rows.append(bovw.encode(per_sample[i], codebook, method.bovw_config))
            ids.append(ds.samples[i].source_id)
            labels.append(ds.samples[i].label)
        descriptor_id = method.method_id
    matrix = np.asarray(rows)
    with open(outpath, "w") as fh:
        dims = ",".join(f"{descriptor_id}_{j}" for j in range(matrix.shape[1]))
        fh.write(f"label,source_id,{dims}\n")
        for label, sid, row in zip(labels, ids, matrix):
            fh.write(f"{label},{sid}," + ",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {matrix.shape[0]} x {matrix.shape[1]} feature matrix to {outpath}")
    return 0


def _cache_from(args) -> dense_descriptors.DescriptorCache | None:
    cache_dir = getattr(args, "cache_dir", None) or os.environ.get(CACHE_ENV_VAR)
    return dense_descriptors.DescriptorCache(cache_dir) if cache_dir else None


def _accuracy_table(report: evaluation.EvalReport) -> str:
    lines = ["run,normalized_accuracy"]
    for r, acc in enumerate(report.normalized):
        lines.append(f"{r},{float(acc)!r}")
    lines.append(f"mean,{report.mean_normalized!r}")
    if report.ci_half_width is not None:
        lines.append(f"ci95_half_width,{report.ci_half_width!r}")
    else:
        lines.append("ci95_half_width,single_run")
    return "\n".join(lines) + "\n"


def run_single(cfg: ExperimentConfig, cache=None) -> evaluation.EvalReport:
    """Execute one configured experiment and write its report directory."""
    ds = load_dataset(cfg)
    method = method_from_config(cfg)
    try:
        plan = evaluation.make_splits(ds, cfg.per_class, cfg.runs, cfg.master_seed)
    except ProtocolError:
        raise
    outdir = Path(cfg.output)
    existed_before = outdir.exists()
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        report = evaluation.run_experiment(
            ds, method, plan, c_value=cfg.svm_c, svm_seed=cfg.svm_seed,
            jobs=cfg.jobs, cache=cache)
        report.save_json(outdir / "report.json")
        written.append(outdir / "report.json")
        (outdir / "accuracy_table.csv").write_text(_accuracy_table(report))
        written.append(outdir / "accuracy_table.csv")
        (outdir / "config.cfg").write_text(config_to_text(cfg))
        written.append(outdir / "config.cfg")
        stamp = {
            "config_hash": config_hash(cfg),
            "method_id": report.method_id,
            "master_seed": cfg.master_seed,
            "codebook_seed": cfg.codebook_seed,
            "svm_seed": cfg.svm_seed,
            "dataset_fingerprint": evaluation.dataset_fingerprint(ds),
            "split_fingerprint": plan.fingerprint,
            "single_run": report.ci_half_width is None,
        }
        (outdir / "stamp.json").write_text(json.dumps(stamp, indent=1, sort_keys=True))
        written.append(outdir / "stamp.json")
        save_confusion_png(report, outdir / "confusion_mean.png")
        written.append(outdir / "confusion_mean.png")
    except Exception:
        # never leave partial results behind
        if existed_before:
            for path in written:
                path.unlink(missing_ok=True)
        else:
            shutil.rmtree(outdir, ignore_errors=True)
        raise
    return report


def _expand_sweeps(cfg: ExperimentConfig, sweeps: list[str]) -> list[tuple[str, ExperimentConfig]]:
    if not sweeps:
        return [("", cfg)]
    axes = []
    for spec in sweeps:
        if "=" not in spec:
            raise ConfigError(f"--sweep expects key=v1,v2,..., got {spec!r}")
        key, _, values = spec.partition("=")
        key = key.strip()
        if key not in _FIELD_KINDS:
            raise ConfigError(f"unknown sweep key {key!r}")
        axes.append([(key, v.strip()) for v in values.split(",") if v.strip()])
    combos = []
    base_out = cfg.output
    for combo in product(*axes):
        tag = "_".join(f"{k}-{v.replace(',', '+')}" for k, v in combo)
        swept = apply_overrides(cfg, [f"{k} = {v}" for k, v in combo])
        swept = replace(swept, output=str(Path(base_out) / tag))
        combos.append((tag, swept))
    return combos


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = apply_overrides(cfg, args.set or [])
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.output:
        cfg = replace(cfg, output=args.output)
    cache = _cache_from(args)
    for tag, swept in _expand_sweeps(cfg, args.sweep or []):
        report = run_single(swept, cache=cache)
        ci = "single run" if report.ci_half_width is None \
            else f"+/- {report.ci_half_width:.4f} (95% CI)"
        prefix = f"[{tag}] " if tag else ""
        print(f"{prefix}{report.method_id}: normalized accuracy "
              f"{report.mean_normalized:.4f} {ci} -> {swept.output}")
    return 0


def cmd_compare(args) -> int:
    report_a = evaluation.EvalReport.load_json(args.report_a)
    report_b = evaluation.EvalReport.load_json(args.report_b)
    result = evaluation.paired_class_test(report_a, report_b, alpha=args.alpha)
    print(f"A: {report_a.method_id}")
    print(f"B: {report_b.method_id}")
    print(f"mean per-class difference: {result.mean_diff:+.4f} "
          f"+/- {result.half_width:.4f} (95% CI)")
    print(f"verdict: {result.verdict}")
    if args.png:
        save_compare_png(result, report_a.method_id, report_b.method_id, args.png)
    return 0


def cmd_report(args) -> int:
    report = evaluation.EvalReport.load_json(args.report)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lines = [
        f"method: {report.method_id}",
        f"classes ({len(report.classes)}): {', '.join(report.classes)}",
        f"runs: {report.n_runs}   train per class: {report.per_class_train}",
        f"mean normalized accuracy: {report.mean_normalized:.4f}",
    ]
    if report.ci_half_width is not None:
        lines.append(f"95% CI half-width: {report.ci_half_width:.4f}")
    else:
        lines.append("95% CI half-width: n/a (single run)")
    lines.append("")
    lines.append("per-class accuracy (mean over runs):")
    per_class = report.per_class_accuracy.mean(axis=0)
    for c, acc in zip(report.classes, per_class):
        lines.append(f"  {c:<20} {acc:.4f}")
    excluded = sum(len(e) for e in report.excluded)
    lines.append("")
    lines.append(f"excluded sample occurrences across runs: {excluded}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")
    save_confusion_png(report, outdir / "confusion_mean.png")
    print("\n".join(lines))
    return 0


# -- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rphar", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load a dataset, write canonical CSVs + manifest")
    p.add_argument("input")
    p.add_argument("--format", choices=("wharf", "csv"), default="wharf")
    p.add_argument("--drop", default="", help="comma-separated class labels to discard")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("render-rp", help="render recurrence plots as PNGs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=("wharf", "csv"), default="csv")
    p.add_argument("--variant", choices=rp.VARIANTS, default="rgb")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--polarity", choices=rp.POLARITIES, default="dark_recurrent")
    p.add_argument("--limit", type=int, default=0, help="max plots per class (0 = all)")
    p.add_argument("--gallery", action="store_true", help="also write per-class contact sheets")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_rp)

    p = sub.add_parser("extract", help="export a feature matrix as CSV")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (repeatable)")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("run", help="run the full classification protocol")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config field (repeatable)")
    p.add_argument("--sweep", action="append", metavar="KEY=V1,V2",
                   help="run the cross-product over these values (repeatable)")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--output", default=None)
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired per-class test between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--png", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="regenerate summary and figures from a report")
    p.add_argument("report")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 3
    except (FileNotFoundError, NotADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
