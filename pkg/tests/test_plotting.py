"""Gráficos SVG a partir de plot data e logs de métricas."""

import json

import pytest

from core.exceptions import OdeInfValidationError
from core.logging_setup import MetricsLogger
from odeinf.plotting import plot_training_curves, plottable_entries, render_plot_data


def trajectory_entry(system="van_der_pol", phase=True):
    entry = {
        "kind": "trajectory", "system": system, "times": [0.0, 0.5, 1.0],
        "reference": [[0.0, 1.0], [0.5, 0.8], [0.9, 0.2]],
        "predicted": [[0.0, 1.0], [0.45, 0.85], [0.8, 0.3]],
        "context_times": [0.0, 1.0], "context": [[0.0, 1.0], [0.9, 0.2]],
    }
    if phase:
        entry["phase"] = {"locations": [[0.0, 0.0], [1.0, 1.0]], "predicted": [[1.0, 0.0], [0.0, -1.0]],
                          "true": [[1.0, 0.1], [0.1, -1.0]]}
    return entry


def test_render_trajectory_and_phase(tmp_path):
    paths = render_plot_data({"entries": [trajectory_entry()]}, tmp_path)
    assert [p.name for p in paths] == ["van_der_pol_trajectory.svg", "van_der_pol_phase.svg"]
    assert all(p.read_text(encoding="utf-8").lstrip().startswith("<?xml") for p in paths)


def test_svg_output_is_deterministic(tmp_path):
    a = render_plot_data({"entries": [trajectory_entry()]}, tmp_path / "a")
    b = render_plot_data({"entries": [trajectory_entry()]}, tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_boundary_entry_is_rendered(tmp_path):
    entry = {"kind": "boundary_statistics", "dimension": 1, "n_records": 3, "edges": [0.0, 0.5, 1.0],
             "mean": [1.0, 2.0], "median": [1.0, None],
             "quantiles": {"q05": [0.5, 1.0], "q25": [0.8, 1.5], "q75": [1.2, 2.5], "q95": [2.0, 3.0]}}
    paths = render_plot_data({"entries": [entry]}, tmp_path)
    assert [p.name for p in paths] == ["boundary_d1.svg"]


def test_single_entry_without_wrapper():
    entry = trajectory_entry(phase=False)
    assert plottable_entries(entry) == [entry]


@pytest.mark.parametrize("data", [{}, {"entries": []}, {"entries": [{"kind": "trajectory", "reference": None}]},
                                  {"entries": [{"kind": "unknown"}]}])
def test_nothing_to_plot(tmp_path, data):
    with pytest.raises(OdeInfValidationError):
        render_plot_data(data, tmp_path / "plots")
    assert not (tmp_path / "plots").exists()


def test_training_curves(tmp_path):
    metrics = tmp_path / "metrics.jsonl"
    with MetricsLogger(metrics) as log:
        for step in range(5):
            log.log({"step": step, "loss": 1.0 / (step + 1), "mae": 0.5, "mean_u": 0.0, "grad_norm": 1.0})
        log.log({"step": 5, "skipped": True, "record_ids": [3]})
    val = tmp_path / "val_metrics.jsonl"
    val.write_text(json.dumps({"step": 4, "val_loss": 0.3, "val_mae": 0.2}) + "\n", encoding="utf-8")
    out = plot_training_curves(metrics, tmp_path / "curves.svg", val_path=val)
    assert out.exists()


def test_training_curves_need_metrics(tmp_path):
    metrics = tmp_path / "metrics.jsonl"
    metrics.write_text(json.dumps({"step": 0, "skipped": True, "record_ids": [1]}) + "\n", encoding="utf-8")
    with pytest.raises(OdeInfValidationError):
        plot_training_curves(metrics, tmp_path / "curves.svg")
