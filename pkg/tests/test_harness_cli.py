import csv
import hashlib
import json
import re
import shutil
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from cemag import ConfigError
from cemag.charts import PLOT_HEIGHT, emit_svg_charts, grouped_bar_chart
from cemag.cli import main
from cemag.data import load_csv
from cemag.harness import (
    CELL_COLUMNS,
    CLASS_COLUMNS,
    FREQ_COLUMNS,
    INSTANCE_COLUMNS,
    DiagnosticsReport,
    ExperimentConfig,
    emit_reports,
    load_report,
    run_experiment,
)
from cemag.models import LogisticRegressionGD, save_model

ROOT = Path(__file__).resolve().parents[1]
EXAMPLE = ROOT / "configs" / "example.json"
SVG_NS = "{http://www.w3.org/2000/svg}"


def _small_cfg(**over):
    doc = {
        "data": {"kind": "synthetic", "spec": {"means": [[0, 0], [2, 2]], "variance": 1.0, "counts": [120, 30]}},
        "methods": ["base", "smote"],
        "n_splits": 2,
        "diagnostics": {"top_k": 1, "top_m": 2},
    }
    doc.update(over)
    return ExperimentConfig.from_dict(doc)


def _run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def small_report():
    return run_experiment(_small_cfg())


# ---------------------------------------------------------------------------
# config


def test_config_defaults():
    cfg = ExperimentConfig.from_dict({"data": {"kind": "synthetic", "spec": {}}})
    assert cfg.methods == ["base"] and cfg.n_splits == 5 and cfg.standardize is True
    emb = ExperimentConfig.from_dict({"data": {"kind": "embeddings", "path": "x.csv"}, "model": "head"})
    assert emb.n_splits == 3 and emb.standardize is False
    assert cfg.diagnostics.rule_for("svm") == "absolute"
    assert cfg.diagnostics.rule_for("logistic") == "fraction"


@pytest.mark.parametrize("doc", [
    {"data": {"kind": "synthetic"}, "modle": "svm"},
    {"data": {"kind": "parquet"}},
    {"data": {"kind": "synthetic"}, "methods": ["base", "mixup"]},
    {"data": {"kind": "synthetic"}, "model": "svm", "methods": ["remix"]},
    {"data": {"kind": "synthetic"}, "n_splits": 0},
    {"data": {"kind": "synthetic"}, "imbalance": {"kind": "step", "n_maj": 5}},
    {"data": {"kind": "synthetic"}, "diagnostics": {"baseline": "zero"}},
    {"data": {"kind": "synthetic"}, "augment": {"k_neighbours": 3}},
])
def test_config_rejections(doc):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)


def test_config_round_trip_and_digest():
    cfg = _small_cfg()
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict() and again.digest() == cfg.digest()
    assert _small_cfg(seed=1).digest() != cfg.digest()


# ---------------------------------------------------------------------------
# experiment


def test_single_method_single_split():
    rep = run_experiment(_small_cfg(methods=["base"], n_splits=1))
    assert {r["method"] for r in rep.classes} == {"base"}
    assert len(rep.cells) == 1 and rep.cells[0]["status"] == "ok"


def test_test_data_never_augmented(small_report):
    by_split = {}
    for c in small_report.cells:
        by_split.setdefault(c["split"], set()).add(c["test_checksum"])
    assert all(len(v) == 1 for v in by_split.values())
    smote = [c for c in small_report.cells if c["method"] == "smote"]
    assert all(c["n_synthetic"] > 0 for c in smote)


def test_split_mean_rows_average_per_split(small_report):
    per = [r for r in small_report.classes if r["split"] != "mean"]
    means = [r for r in small_report.classes if r["split"] == "mean"]
    for m in means:
        rows = [r for r in per if r["method"] == m["method"] and str(r["class"]) == str(m["class"])
                and r["group"] == m["group"]]
        assert len(rows) == 2
        for col in ("fraction_mean", "share_mean", "coverage", "n_tp"):
            vals = [r[col] for r in rows if not np.isnan(r[col])]
            if vals:
                assert m[col] == pytest.approx(sum(vals) / len(vals), rel=1e-15)


def test_instance_rows_are_true_positives(small_report):
    for r in small_report.instances:
        assert 0 <= r["k"] and 0.0 <= r["fraction"] <= 1.0
        assert np.isnan(r["share"]) or 0 < r["share"] <= 1.0


def test_failed_cell_is_recorded_and_others_proceed():
    rep = run_experiment(_small_cfg(augment={"k_neighbors": 100}, n_splits=1))
    status = {c["method"]: c["status"] for c in rep.cells}
    assert status == {"base": "ok", "smote": "failed"}
    assert "DataError" in [c for c in rep.cells if c["method"] == "smote"][0]["error"]
    assert all(r["method"] == "base" for r in rep.instances)


def test_svm_experiment_uses_absolute_rule():
    rep = run_experiment(_small_cfg(model="svm", n_splits=1))
    assert all(c["status"] == "ok" for c in rep.cells)
    assert all(c["dim"] > 2 for c in rep.cells)


def _write_embeddings(path, X, y):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, lab in zip(X.tolist(), y.tolist()):
            w.writerow([repr(v) for v in row] + [lab])


def test_embedding_experiment_with_head(tmp_path):
    rng = np.random.default_rng(0)
    centers = rng.normal(0, 2, (3, 16))
    y = np.repeat([0, 1, 2], [90, 30, 12])
    X = centers[y] + rng.normal(size=(y.size, 16))
    _write_embeddings(tmp_path / "emb.csv", X, y)
    W = centers.copy()
    (tmp_path / "head.json").write_text(json.dumps({"W": W.tolist(), "b": (-0.5 * (W * W).sum(1)).tolist()}))
    cfg = ExperimentConfig.from_dict({
        "data": {"kind": "embeddings", "path": "emb.csv", "head": "head.json"},
        "model": "head", "methods": ["base", "dsm", "eos", "remix"], "n_splits": 1,
        "trainer": {"max_iterations": 200},
    }, base_dir=tmp_path)
    rep = run_experiment(cfg)
    assert [c["status"] for c in rep.cells] == ["ok"] * 4
    assert {c["dim"] for c in rep.cells} == {16}
    groups = {r["group"] for r in rep.classes if r["class"] == "*"}
    assert groups == {"majority", "minority"}


# ---------------------------------------------------------------------------
# report files


def test_empty_method_grid_writes_config_only(tmp_path):
    cfg = _small_cfg(methods=[])
    files = emit_reports(run_experiment(cfg), tmp_path)
    assert list(files) == ["config.json"]
    emit_svg_charts(load_report(tmp_path), tmp_path)
    assert sorted(json.loads((tmp_path / "manifest.json").read_text())["files"]) == ["config.json"]


def test_manifest_hashes_and_columns(tmp_path, small_report):
    files = emit_reports(small_report, tmp_path)
    assert set(files) == {"config.json", "instance_metrics.csv", "class_metrics.csv", "freq_mag.csv", "cells.csv"}
    for name, digest in files.items():
        assert hashlib.sha256((tmp_path / name).read_bytes()).hexdigest() == digest
    headers = {name: (tmp_path / name).read_text().splitlines()[0].split(",")
               for name in files if name.endswith(".csv")}
    assert headers["instance_metrics.csv"] == INSTANCE_COLUMNS
    assert headers["class_metrics.csv"] == CLASS_COLUMNS
    assert headers["freq_mag.csv"] == FREQ_COLUMNS
    assert headers["cells.csv"] == CELL_COLUMNS
    assert json.loads((tmp_path / "config.json").read_text()) == small_report.config


def test_load_report_round_trip(tmp_path, small_report):
    emit_reports(small_report, tmp_path)
    back = load_report(tmp_path)
    for metric in ("fraction_mean", "coverage", "share_mean"):
        a, b = small_report.summary(metric), back.summary(metric)
        assert a.keys() == b.keys()
        for m in a:
            assert a[m].keys() == b[m].keys()
            for c in a[m]:
                assert (np.isnan(a[m][c]) and np.isnan(b[m][c])) or a[m][c] == b[m][c]


def test_unwritable_output(tmp_path, small_report):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(Exception):
        emit_reports(small_report, blocker / "sub")


# ---------------------------------------------------------------------------
# charts


def _bars(svg_text):
    root = ET.fromstring(svg_text)
    return [(e, float(e.get("height"))) for e in root.iter(f"{SVG_NS}rect") if e.get("class") == "bar"]


def test_single_bar_chart():
    bars = _bars(grouped_bar_chart(["base"], ["majority"], [[0.5]], ymax=1.0))
    assert len(bars) == 1
    assert bars[0][1] == PLOT_HEIGHT / 2


def test_svg_bars_match_report(tmp_path, small_report):
    emit_svg_charts(small_report, tmp_path)
    for fname, metric in [("ce_fraction.svg", "fraction_mean"), ("class_coverage.svg", "coverage"),
                          ("contribution_share.svg", "share_mean")]:
        table = small_report.summary(metric)
        root = ET.fromstring((tmp_path / fname).read_text())
        ymax = float(next(root.iter(f"{SVG_NS}g")).get("data-ymax"))
        seen = 0
        for bar, height in _bars((tmp_path / fname).read_text()):
            method, cls = bar.get("data-category"), bar.get("data-series").removeprefix("class ")
            value = table[method][cls]
            assert float(bar.get("data-value")) == value
            assert height == pytest.approx(min(value, ymax) / ymax * PLOT_HEIGHT, abs=1e-4)
            seen += 1
        finite = sum(1 for m in table.values() for v in m.values() if not np.isnan(v))
        assert seen == finite
    freq_rows = [r for r in small_report.freq_mag if r["split"] == 0 and r["method"] == "smote" and r["class"] == 1]
    root = ET.fromstring((tmp_path / "freq_mag_smote_class1.svg").read_text())
    vals = [float(b.get("data-value")) for b in root.iter(f"{SVG_NS}rect") if b.get("class") == "bar"]
    expected = [r["frequency"] for r in freq_rows] + [r["mean_magnitude"] for r in freq_rows]
    assert vals == expected


def test_svg_deterministic(tmp_path, small_report):
    emit_svg_charts(small_report, tmp_path / "a")
    emit_svg_charts(small_report, tmp_path / "b")
    for p in (tmp_path / "a").glob("*.svg"):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


# ---------------------------------------------------------------------------
# command line


def test_cli_run_example(tmp_path, capsys):
    code, out, err = _run_cli(["run", EXAMPLE, "--out", tmp_path, "--log-level", "INFO"], capsys)
    assert code == 0
    run_dir = Path(out.strip())
    manifest = json.loads((run_dir / "manifest.json").read_text())["files"]
    assert "ce_fraction.svg" in manifest and "class_metrics.csv" in manifest
    line = err.splitlines()[0]
    assert re.match(r"^INFO \d{4}-\d\d-\d\d \d\d:\d\d:\d\d,\d+ load loaded \d+ rows", line)


def test_cli_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "data": {"kind": "synthetic",,}\n}\n')
    code, _, err = _run_cli(["run", bad], capsys)
    assert code == 1
    assert "line 2, column" in err


def test_cli_unknown_subcommand(capsys):
    code, _, err = _run_cli(["frobnicate"], capsys)
    assert code == 1 and "usage" in err


def test_cli_no_subcommand(capsys):
    assert _run_cli([], capsys)[0] == 1


def test_cli_missing_data_is_runtime_failure(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": {"kind": "csv", "path": "missing.csv"}, "output_dir": str(tmp_path)}))
    assert _run_cli(["run", cfg], capsys)[0] == 2


def test_cli_synth_and_probe(tmp_path, capsys):
    out_csv = tmp_path / "s.csv"
    code, _, _ = _run_cli(["synth-data", ROOT / "configs" / "synth_spec.json", out_csv], capsys)
    assert code == 0
    ds = load_csv(out_csv)
    assert ds.class_counts.tolist() == [1000, 50]
    model = tmp_path / "m.json"
    save_model(LogisticRegressionGD.from_weights([1.0, 1.0], -3.0), model)
    code, out, _ = _run_cli(["probe", model, out_csv], capsys)
    assert code == 0
    rows = out.splitlines()
    assert len(rows) - 1 == ds.n_samples
    dec_out = tmp_path / "d.csv"
    _run_cli(["probe", model, out_csv, "--out", dec_out], capsys)
    assert dec_out.read_text() == out


def test_cli_synth_seed_flag(tmp_path, capsys):
    spec = ROOT / "configs" / "synth_spec.json"
    _run_cli(["synth-data", spec, tmp_path / "a.csv", "--seed", "5"], capsys)
    _run_cli(["synth-data", spec, tmp_path / "b.csv"], capsys)
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "b.csv").read_bytes()


def test_cli_probe_dimension_mismatch(tmp_path, capsys):
    model = tmp_path / "m.json"
    save_model(LogisticRegressionGD.from_weights([1.0, 1.0, 1.0], 0.0), model)
    data = tmp_path / "d.csv"
    data.write_text("1.0,2.0,0\n3.0,4.0,1\n")
    assert _run_cli(["probe", model, data], capsys)[0] == 2


def test_cli_report_reemits_identical_charts(tmp_path, capsys):
    code, out, _ = _run_cli(["run", EXAMPLE, "--out", tmp_path / "runs"], capsys)
    run_dir = Path(out.strip())
    copy = tmp_path / "copy"
    shutil.copytree(run_dir, copy)
    for svg in copy.glob("*.svg"):
        svg.unlink()
    code, _, _ = _run_cli(["report", copy], capsys)
    assert code == 0
    for svg in run_dir.glob("*.svg"):
        assert (copy / svg.name).read_bytes() == svg.read_bytes()
    assert (copy / "manifest.json").read_bytes() == (run_dir / "manifest.json").read_bytes()


def test_cli_report_on_non_report_dir(tmp_path, capsys):
    assert _run_cli(["report", tmp_path], capsys)[0] == 2


def test_report_summary_levels():
    rep = DiagnosticsReport({"methods": ["base"]}, classes=[
        {"split": "mean", "method": "base", "class": 0, "group": "majority", "coverage": 0.5},
        {"split": "mean", "method": "base", "class": "*", "group": "majority", "coverage": 0.25},
        {"split": 0, "method": "base", "class": 0, "group": "majority", "coverage": 0.75},
    ])
    assert rep.summary("coverage") == {"base": {"0": 0.5}}
    assert rep.summary("coverage", "group") == {"base": {"majority": 0.25}}
