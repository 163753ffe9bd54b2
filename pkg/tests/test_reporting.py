"""Relatórios de avaliação, benchmarks e estatísticas de fronteira."""

import json

import pytest
from openpyxl import load_workbook

from core.exceptions import OdeInfValidationError
from core.logging_setup import read_metrics
from odeinf.dataset_store import boundary_statistics
from odeinf.evaluation import (TASK_GENERALIZATION, TASK_RECONSTRUCTION, EvaluationReport, TaskScore,
                               VFMetrics)
from odeinf.reporting import (BOUNDARY_PLOT_DATA, BOUNDARY_TABLE, PLOT_DATA, REPORT_DETAILS, REPORT_JSON,
                              REPORT_TABLES, REPORT_XLSX, rejection_table, render_report, render_suite,
                              write_boundary_report, write_report, write_suite_report)


def make_report(with_plot_data=False):
    scores = [
        TaskScore("van_der_pol", TASK_RECONSTRUCTION, 0.0, 0.0, 1, 0.95, [0.96, 0.94]),
        TaskScore("van_der_pol", TASK_GENERALIZATION, 0.0, 0.0, 1, 0.85, [0.8, 0.9]),
        TaskScore("lorenz", TASK_RECONSTRUCTION, 0.0, 0.0, 2, None, failure="divergence_bound", chaotic=True),
        TaskScore("lorenz", TASK_GENERALIZATION, 0.0, 0.0, 2, 0.5, [0.5, 0.5, 0.5], chaotic=True),
    ]
    report = EvaluationReport(scores=scores, vf={"van_der_pol": VFMetrics(0.1, 0.99, 64, 0)},
                              metadata={"seed": 0})
    if with_plot_data:
        report.plot_data.append({"kind": "trajectory", "system": "van_der_pol", "times": [0, 1],
                                 "reference": [[0, 0], [1, 1]], "predicted": None})
    return report


def test_write_report_files(tmp_path):
    paths = write_report(make_report(), tmp_path / "eval")
    names = [p.name for p in paths]
    assert names == [REPORT_TABLES, REPORT_JSON, REPORT_DETAILS, REPORT_XLSX]

    data = json.loads((tmp_path / "eval" / REPORT_JSON).read_text(encoding="utf-8"))
    assert data["success_rates"][TASK_RECONSTRUCTION]["rho=0,sigma=0"] == {"0.9": 0.5, "0.8": 0.5}
    assert data["success_rates"][TASK_GENERALIZATION]["rho=0,sigma=0"] == {"0.9": 0.0, "0.8": 0.5}
    assert len(read_metrics(tmp_path / "eval" / REPORT_DETAILS)) == 4

    wb = load_workbook(tmp_path / "eval" / REPORT_XLSX)
    assert wb.sheetnames == ["success_rates", "details", "vf_metrics"]
    assert wb["details"].max_row == 5


def test_write_report_with_plot_data(tmp_path):
    paths = write_report(make_report(with_plot_data=True), tmp_path)
    assert paths[-1].name == PLOT_DATA
    assert json.loads(paths[-1].read_text(encoding="utf-8"))["entries"][0]["system"] == "van_der_pol"


def test_empty_report_writes_nothing(tmp_path):
    out = tmp_path / "eval"
    with pytest.raises(OdeInfValidationError):
        write_report(EvaluationReport(), out)
    assert not out.exists()


def test_rendered_tables():
    text = render_report(make_report())
    assert "Taxa de sucesso: reconstruction" in text
    assert "50.0%" in text
    assert "Falhas: 1 de 4" in text
    assert "lorenz" in text.split("Aviso")[1]


def test_suite_report(tmp_path):
    suite = {
        "seed": 0, "n_trials": 2,
        "trials": [
            {"task": "vdp_task1", "trial": 0, "seed": 1, "zero_shot_mse": 0.1, "failure": None},
            {"task": "vdp_task1", "trial": 1, "seed": 2, "zero_shot_mse": None, "failure": "divergence_bound"},
        ],
        "summary": {"vdp_task1": {"zero_shot": {"n": 1, "n_failed": 1, "mean": 0.1, "median": 0.1,
                                                "std": 0.0, "min": 0.1, "max": 0.1}}},
    }
    paths = write_suite_report(suite, tmp_path)
    assert [p.name for p in paths] == ["suite_tables.txt", "suite_report.json", "suite_trials.jsonl",
                                       "suite_report.xlsx"]
    assert "vdp_task1" in render_suite(suite)
    assert load_workbook(paths[-1])["trials"].max_row == 3
    with pytest.raises(OdeInfValidationError):
        write_suite_report({"trials": []}, tmp_path / "empty")


def test_boundary_report(tmp_path, records_2d):
    stats = [boundary_statistics(records_2d, n_bins=5)]
    rejection = {"2": {"accepted": 3, "attempted": 4, "rejection_rate": 0.25, "reasons": {"divergence": 1}}}
    paths = write_boundary_report(stats, tmp_path, rejection=rejection)
    assert [p.name for p in paths] == [BOUNDARY_TABLE, BOUNDARY_PLOT_DATA, "boundary_d2.svg"]
    text = (tmp_path / BOUNDARY_TABLE).read_text(encoding="utf-8")
    assert text.startswith("Estatísticas de rejeição")
    assert "divergence=1" in text
    with pytest.raises(OdeInfValidationError):
        write_boundary_report([], tmp_path)


def test_rejection_table_orders_dimensions_numerically():
    stats = {str(d): {"accepted": 1, "attempted": 2, "rejection_rate": 0.5} for d in (10, 2, 1)}
    rows = rejection_table(stats).splitlines()[2:]
    assert [int(r.split()[0]) for r in rows] == [1, 2, 10]
