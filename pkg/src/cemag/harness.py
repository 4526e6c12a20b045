"""End-to-end experiments: imbalance, split, augment, train, decompose, diagnose, report."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.preprocessing import StandardScaler

from ._validation import CemagError, ConfigError, DiagnosticError
from .augment import METHODS, AugmentConfig, rebalance
from .data import (
    Dataset,
    apply_exponential_imbalance,
    apply_step_imbalance,
    load_csv,
    load_embedding_table,
    split_indices,
    synth_gaussian,
)
from .diagnostics import (
    BASELINES,
    K_RULES,
    aggregate,
    assign_groups,
    class_unique_ce,
    frequency_magnitude_profile,
    minimal_ce_count,
    topk_contribution_share,
)
from .models import TrainConfig, train_logistic, train_softmax_head, train_svm
from .probe import batch_decompose

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "DiagnosticsOptions",
    "DiagnosticsReport",
    "run_experiment",
    "emit_reports",
    "load_report",
    "INSTANCE_COLUMNS",
    "CLASS_COLUMNS",
    "FREQ_COLUMNS",
    "CELL_COLUMNS",
]

MODEL_KINDS = ("logistic", "svm", "head")
ALL_METHODS = ("base",) + METHODS

INSTANCE_COLUMNS = ["split", "method", "id", "class", "k", "fraction", "share"]
CLASS_COLUMNS = [
    "split", "method", "class", "group", "n_test", "n_tp", "coverage",
    "k_mean", "k_sd", "fraction_mean", "fraction_sd", "share_mean", "share_sd", "spearman_rho",
]
FREQ_COLUMNS = ["split", "method", "class", "feature_index", "frequency", "mean_magnitude", "rank"]
CELL_COLUMNS = [
    "split", "method", "seed", "status", "error", "n_train", "n_synthetic", "dim",
    "test_accuracy", "converged", "test_checksum",
]


@dataclass
class DiagnosticsOptions:
    top_k: int = 10
    top_m: int = 5
    k_rule: str | None = None  # None: absolute for svm, fraction otherwise
    baseline: str = "bias"

    def __post_init__(self):
        if self.top_k < 1 or self.top_m < 1:
            raise ConfigError("top_k and top_m must be >= 1")
        if self.k_rule is not None and self.k_rule not in K_RULES:
            raise ConfigError(f"k_rule must be one of {K_RULES}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")

    def rule_for(self, model: str) -> str:
        if self.k_rule is not None:
            return self.k_rule
        return "absolute" if model == "svm" else "fraction"


def _sub(doc: dict, cls, what: str):
    try:
        return cls(**(doc or {}))
    except TypeError as exc:
        raise ConfigError(f"bad {what} section: {exc}") from None


@dataclass
class ExperimentConfig:
    """One experiment; see README for the JSON schema."""

    data: dict
    model: str = "logistic"
    methods: list = field(default_factory=lambda: ["base"])
    imbalance: dict | None = None
    train_fraction: float = 0.7
    n_splits: int | None = None
    trainer: TrainConfig = field(default_factory=TrainConfig)
    augment: dict = field(default_factory=dict)
    standardize: bool | None = None
    use_provided_head: bool = True
    diagnostics: DiagnosticsOptions = field(default_factory=DiagnosticsOptions)
    seed: int = 0
    output_dir: str = "runs"

    def __post_init__(self):
        if not isinstance(self.data, dict) or self.data.get("kind") not in ("synthetic", "csv", "embeddings"):
            raise ConfigError("data.kind must be 'synthetic', 'csv' or 'embeddings'")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {ALL_METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if self.model == "svm" and "remix" in self.methods:
            raise ConfigError("remix produces soft labels, which the svm trainer does not accept")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.n_splits is None:
            self.n_splits = 3 if self.data["kind"] == "embeddings" else 5
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        if self.standardize is None:
            self.standardize = self.model != "head"
        if self.imbalance is not None:
            kind = self.imbalance.get("kind")
            if kind == "exponential":
                need = ("n_max", "ratio")
            elif kind == "step":
                need = ("majority_classes", "n_maj", "n_min")
            else:
                raise ConfigError("imbalance.kind must be 'exponential' or 'step'")
            missing = [k for k in need if k not in self.imbalance]
            if missing:
                raise ConfigError(f"imbalance section is missing {missing}")
        self.augment_config("smote")  # validate early

    def augment_config(self, method: str) -> AugmentConfig:
        try:
            return AugmentConfig(method=method, **self.augment)
        except TypeError as exc:
            raise ConfigError(f"bad augment section: {exc}") from None

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = dict(doc)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        if "data" not in doc:
            raise ConfigError("config needs a 'data' section")
        doc["trainer"] = TrainConfig.from_dict(doc.get("trainer"))
        doc["diagnostics"] = _sub(doc.get("diagnostics"), DiagnosticsOptions, "diagnostics")
        data = dict(doc["data"]) if isinstance(doc["data"], dict) else doc["data"]
        if base_dir is not None and isinstance(data, dict):
            for key in ("path", "head"):
                if data.get(key):
                    data[key] = str((base_dir / data[key]).resolve())
        doc["data"] = data
        return cls(**doc)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["trainer"] = self.trainer.to_dict()
        return doc

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class DiagnosticsReport:
    config: dict
    instances: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    freq_mag: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def methods(self) -> list:
        return list(self.config.get("methods", []))

    def summary(self, metric: str, level: str = "class") -> dict:
        """``{method: {class_or_group: value}}`` from the split-averaged rows."""
        out: dict = defaultdict(dict)
        for row in self.classes:
            if row["split"] != "mean":
                continue
            if level == "class" and row["class"] != "*":
                out[row["method"]][str(row["class"])] = row[metric]
            elif level == "group" and row["class"] == "*":
                out[row["method"]][row["group"]] = row[metric]
        return dict(out)


# ---------------------------------------------------------------------------
# running


class _Timer:
    def __init__(self):
        self.totals: dict = defaultdict(float)

    def stage(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()
                log.debug("start", extra={"stage": name})

            def __exit__(self, *exc):
                timer.totals[name] += time.perf_counter() - self.t0

        return _Ctx()


def _load_source(cfg: ExperimentConfig) -> Dataset:
    src = cfg.data
    try:
        if src["kind"] == "synthetic":
            return synth_gaussian(src["spec"], src.get("seed", cfg.seed))
        if src["kind"] == "csv":
            return load_csv(src["path"], src.get("has_header", False), src.get("label_column", -1))
        return load_embedding_table(src["path"], src.get("head"))
    except KeyError as exc:
        raise ConfigError(f"data section is missing {exc}") from None


def _imbalance(ds: Dataset, spec: dict | None, seed: int) -> Dataset:
    if spec is None:
        return ds
    if spec["kind"] == "exponential":
        return apply_exponential_imbalance(ds, spec["n_max"], spec["ratio"], seed)
    return apply_step_imbalance(ds, spec["majority_classes"], spec["n_maj"], spec["n_min"], seed)


def _train(cfg: ExperimentConfig, data, num_classes: int):
    if cfg.model == "logistic":
        return train_logistic(data, cfg.trainer)
    if cfg.model == "svm":
        return train_svm(data, cfg.trainer)
    return train_softmax_head(data, cfg.trainer, n_classes=num_classes)


def _mean_sd(vals):
    vals = [v for v in vals if not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return float("nan"), float("nan")
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _run_cell(cfg, split, method, seed, train, test, test_ids, train_counts, groups, timer):
    """Rows for one (split, method) cell; raises on any stage failure."""
    opts = cfg.diagnostics
    C = train.num_classes
    with timer.stage("augment"):
        data = train if method == "base" else rebalance(train, method, cfg.augment_config(method), seed)
    n_synth = 0 if method == "base" else len(data.batch)
    with timer.stage("train"):
        if cfg.model == "head" and method == "base" and cfg.use_provided_head and getattr(train, "head", None) is not None:
            model = train.head
        else:
            model = _train(cfg, data, C)
    with timer.stage("decompose"):
        test_dec = batch_decompose(model, test, instance_ids=test_ids, num_classes=C)
        train_dec = batch_decompose(model, train, num_classes=C)
    rule = opts.rule_for(cfg.model)
    instances, classes, freq = [], [], []
    with timer.stage("diagnose"):
        for d in test_dec.true_positives():
            k = minimal_ce_count(d, opts.baseline)
            try:
                share = topk_contribution_share(d, rule).share
            except DiagnosticError:
                share = float("nan")
            instances.append({
                "split": split, "method": method, "id": d.instance_id, "class": d.true_label,
                "k": k.k, "fraction": k.fraction, "share": share,
            })
        for c in range(C):
            rows = [r for r in instances if r["class"] == c]
            tps = test_dec.true_positives(c)
            cov = class_unique_ce(tps, opts.top_k).coverage_fraction if tps else float("nan")
            train_tps = train_dec.true_positives(c)
            rho = float("nan")
            if train_tps:
                prof = frequency_magnitude_profile(train_tps, opts.top_k, opts.top_m)
                rho = prof.spearman_rho
                for rank, (idx, f, mag) in enumerate(prof.entries, start=1):
                    freq.append({
                        "split": split, "method": method, "class": c, "feature_index": idx,
                        "frequency": f, "mean_magnitude": mag, "rank": rank,
                    })
            row = {"split": split, "method": method, "class": c, "group": groups[c],
                   "n_test": int(np.sum(test.labels == c)), "n_tp": len(tps), "coverage": cov,
                   "spearman_rho": rho}
            for m in ("k", "fraction", "share"):
                row[f"{m}_mean"], row[f"{m}_sd"] = _mean_sd([r[m] for r in rows])
            classes.append(row)
        stats = {}
        if instances:
            stats = {(s.group, s.metric): s for s in aggregate(instances, ("k", "fraction", "share"), "majority",
                                                             train_counts)}
        for g in ("majority", "minority"):
            members = [c for c in range(C) if groups[c] == g]
            if not members:
                continue
            mine = [r for r in classes if r["class"] in members]
            row = {"split": split, "method": method, "class": "*", "group": g,
                   "n_test": sum(r["n_test"] for r in mine), "n_tp": sum(r["n_tp"] for r in mine),
                   "coverage": _mean_sd([r["coverage"] for r in mine])[0],
                   "spearman_rho": _mean_sd([r["spearman_rho"] for r in mine])[0]}
            for m in ("k", "fraction", "share"):
                st = stats.get((g, m))
                row[f"{m}_mean"], row[f"{m}_sd"] = (st.mean, st.sd) if st else (float("nan"), float("nan"))
            classes.append(row)
    info = {
        "n_train": int(data.features.shape[0]), "n_synthetic": n_synth, "dim": test_dec.decompositions[0].dim,
        "test_accuracy": float(test_dec.tp_mask.mean()), "converged": bool(getattr(model, "converged_", True)),
    }
    return instances, classes, freq, info


def _split_means(rows: list, n_splits: int) -> list:
    """Average every numeric column of the per-split class rows across splits."""
    keyed: dict = defaultdict(list)
    for r in rows:
        keyed[(r["method"], str(r["class"]), r["group"])].append(r)
    out = []
    for (method, cls, group), rs in keyed.items():
        row = {"split": "mean", "method": method, "class": rs[0]["class"], "group": group}
        for col in CLASS_COLUMNS[4:]:
            row[col] = _mean_sd([r[col] for r in rs])[0]
        out.append(row)
    return out


def run_experiment(cfg: ExperimentConfig) -> DiagnosticsReport:
    """Run every (split, method) cell; a failing cell is recorded and skipped."""
    timer = _Timer()
    report = DiagnosticsReport(cfg.to_dict())
    with timer.stage("load"):
        source = _load_source(cfg)
    log.info("loaded %d rows, %d features, %d classes", source.n_samples, source.feature_dim,
             source.num_classes, extra={"stage": "load"})
    per_split_classes = []
    for split in range(cfg.n_splits):
        seed = cfg.seed + split
        with timer.stage("split"):
            ds = _imbalance(source, cfg.imbalance, seed)
            tr_idx, te_idx = split_indices(ds.labels, cfg.train_fraction, seed)
            train, test = ds.subset(tr_idx), ds.subset(te_idx)
            if cfg.standardize:
                scaler = StandardScaler().fit(train.features)
                train = train._replace(features=scaler.transform(train.features))
                test = test._replace(features=scaler.transform(test.features))
        train_counts = train.class_counts
        groups = assign_groups(train_counts)
        test_sum = test.checksum()
        log.info("split %d: train counts %s, test counts %s", split, train_counts.tolist(),
                 test.class_counts.tolist(), extra={"stage": "split"})
        for method in cfg.methods:
            cell = {"split": split, "method": method, "seed": seed, "status": "ok", "error": "",
                    "n_train": "", "n_synthetic": "", "dim": "", "test_accuracy": "", "converged": "",
                    "test_checksum": test_sum}
            try:
                inst, cls_rows, freq, info = _run_cell(cfg, split, method, seed, train, test, te_idx.tolist(),
                                                       train_counts, groups, timer)
                if test.checksum() != test_sum:
                    raise CemagError("test data changed during the cell")
            except (CemagError, ValueError, FloatingPointError) as exc:
                cell.update(status="failed", error=f"{type(exc).__name__}: {exc}")
                log.warning("split %d method %s failed: %s", split, method, exc, extra={"stage": "cell"})
            else:
                cell.update(info)
                report.instances.extend(inst)
                report.freq_mag.extend(freq)
                per_split_classes.extend(cls_rows)
                log.info("split %d method %s: %d TP, test accuracy %.4f", split, method, len(inst),
                         info["test_accuracy"], extra={"stage": "cell"})
            report.cells.append(cell)
    report.classes = per_split_classes + _split_means(per_split_classes, cfg.n_splits)
    report.timings = dict(timer.totals)
    return report


# ---------------------------------------------------------------------------
# report files


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path: Path, columns: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, names: list) -> dict:
    manifest_path = out_dir / "manifest.json"
    entries = {}
    if manifest_path.exists():
        entries = json.loads(manifest_path.read_text(encoding="utf-8")).get("files", {})
    for name in names:
        entries[name] = _file_hash(out_dir / name)
    doc = {"files": dict(sorted(entries.items()))}
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc["files"]


def emit_reports(report: DiagnosticsReport, out_dir) -> dict:
    """Write config echo, diagnostics CSVs and a manifest of content hashes.

    ``timings.json`` is written too but left out of the manifest because wall
    clock differs between runs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CemagError(f"cannot create output directory {out}: {exc}") from None
    (out / "manifest.json").unlink(missing_ok=True)
    (out / "config.json").write_text(json.dumps(report.config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    names = ["config.json"]
    if report.methods:
        tables = [
            ("instance_metrics.csv", INSTANCE_COLUMNS, report.instances),
            ("class_metrics.csv", CLASS_COLUMNS, report.classes),
            ("freq_mag.csv", FREQ_COLUMNS, report.freq_mag),
            ("cells.csv", CELL_COLUMNS, report.cells),
        ]
        for name, cols, rows in tables:
            _write_table(out / name, cols, rows)
            names.append(name)
    (out / "timings.json").write_text(json.dumps(report.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return write_manifest(out, names)


def _parse_cell(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def _read_table(path: Path) -> list:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse_cell(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_report(run_dir) -> DiagnosticsReport:
    run_dir = Path(run_dir)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise CemagError(f"{run_dir} has no config.json; not a report directory")
    report = DiagnosticsReport(json.loads(cfg_path.read_text(encoding="utf-8")))
    report.instances = _read_table(run_dir / "instance_metrics.csv")
    report.classes = _read_table(run_dir / "class_metrics.csv")
    report.freq_mag = _read_table(run_dir / "freq_mag.csv")
    report.cells = _read_table(run_dir / "cells.csv")
    for row in report.classes:
        row["split"] = row["split"] if row["split"] == "mean" else int(row["split"])
    return report


def run_dir_for(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir) / f"run-{cfg.digest()[:12]}"
