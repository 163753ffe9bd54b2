"""
Exportação de relatórios: tabelas de texto, detalhes JSONL, JSON completo,
plot data e livro Excel.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Sequence

from openpyxl import Workbook

from core.exceptions import OdeInfIOError, OdeInfValidationError
from core.io_utils import atomic_write_json, atomic_write_text
from core.logging_setup import MetricsLogger
from odeinf.dataset_store import BoundaryStatistics
from odeinf.evaluation import EvaluationReport

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_TABLES = "report_tables.txt"
REPORT_DETAILS = "details.jsonl"
REPORT_XLSX = "report.xlsx"
PLOT_DATA = "plot_data.json"


def _fmt(value: Any, digits: int = 3) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        if value != value:
            return "nan"
        return f"{value:.{digits}f}"
    return str(value)


def success_rate_table(report: EvaluationReport, kind: str) -> str:
    """Linhas = limiar, colunas = células (ρ, σ); valores em percentagem."""
    rates = report.success_rates().get(kind, {})
    if not rates:
        return ""
    cells = list(rates.keys())
    width = max(12, max(len(c) for c in cells) + 2)
    header = f"{'R2 >':<8}" + "".join(f"{c:>{width}}" for c in cells)
    lines = [f"Taxa de sucesso: {kind}", header, "-" * len(header)]
    for t in report.thresholds:
        key = f"{t:g}"
        row = f"{key:<8}" + "".join(f"{100.0 * rates[c][key]:>{width - 1}.1f}%" for c in cells)
        lines.append(row)
    return "\n".join(lines) + "\n"


def vf_table(report: EvaluationReport) -> str:
    if not report.vf:
        return ""
    lines = [f"{'sistema':<24}{'RMSE':>12}{'cosseno':>12}{'excluídos':>12}"]
    for name, m in sorted(report.vf.items()):
        lines.append(f"{name:<24}{_fmt(m.rmse, 4):>12}{_fmt(m.cosine, 4):>12}{m.n_excluded:>12d}")
    return "Métricas do campo vetorial\n" + "\n".join(lines) + "\n"


def render_report(report: EvaluationReport) -> str:
    parts = [success_rate_table(report, kind) for kind in sorted({s.kind for s in report.scores})]
    parts.append(vf_table(report))
    failures = [s for s in report.scores if s.failure]
    if failures:
        parts.append(f"Falhas: {len(failures)} de {len(report.scores)}\n")
    chaotic = sorted({s.system for s in report.scores if s.chaotic})
    if chaotic:
        parts.append("Aviso: sistemas caóticos (pontuação sensível à condição inicial): "
                     + ", ".join(chaotic) + "\n")
    return "\n".join(p for p in parts if p)


def save_workbook(wb: Workbook, path: Path) -> None:
    """Escreve para ficheiro temporário e substitui."""
    tmp = path.with_suffix(path.suffix + ".tmp")
    wb.save(tmp)
    os.replace(tmp, path)


def report_workbook(report: EvaluationReport) -> Workbook:
    wb = Workbook()
    ws = wb.active
    ws.title = "success_rates"
    ws.append(["tarefa", "célula", "limiar", "taxa"])
    for kind, cells in report.success_rates().items():
        for cell, by_t in cells.items():
            for t, rate in by_t.items():
                ws.append([kind, cell, float(t), rate])
    ws.freeze_panes = "A2"

    details = wb.create_sheet("details")
    cols = ["system", "kind", "sigma", "rho", "seed", "r2", "failure", "chaotic", "n_context"]
    details.append(cols)
    for s in report.scores:
        d = s.to_dict()
        details.append([d[c] for c in cols])
    details.freeze_panes = "A2"

    if report.vf:
        vf = wb.create_sheet("vf_metrics")
        vf.append(["system", "rmse", "cosine", "n_samples", "n_excluded"])
        for name, m in sorted(report.vf.items()):
            vf.append([name, m.rmse, None if m.cosine != m.cosine else m.cosine, m.n_samples, m.n_excluded])
    return wb


def write_report(report: EvaluationReport, out_dir: Path) -> List[Path]:
    """
    Escreve todos os artefactos do relatório.

    Raises:
        OdeInfValidationError: relatório vazio (nada é escrito)
    """
    if report.is_empty():
        raise OdeInfValidationError("relatório vazio: nada a escrever")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = [out_dir / REPORT_TABLES, out_dir / REPORT_JSON, out_dir / REPORT_DETAILS,
                 out_dir / REPORT_XLSX]
        atomic_write_text(paths[0], render_report(report))
        atomic_write_json(paths[1], report.to_dict())
        with MetricsLogger(paths[2]) as details:
            for s in report.scores:
                details.log(s.to_dict())
        save_workbook(report_workbook(report), paths[3])
        if report.plot_data:
            atomic_write_json(out_dir / PLOT_DATA, {"entries": report.plot_data})
            paths.append(out_dir / PLOT_DATA)
    except OSError as e:
        raise OdeInfIOError(f"Falha ao escrever relatório em {out_dir}: {e}", path=out_dir) from e
    logger.info(f"Relatório escrito em {out_dir}")
    return paths


def render_suite(suite: Dict[str, Any]) -> str:
    stats = ("mean", "median", "std", "min", "max")
    header = f"{'tarefa':<12}{'modo':<12}" + "".join(f"{s:>12}" for s in stats) + f"{'n':>6}{'falhas':>8}"
    lines = [f"MSE de teste sobre {suite['n_trials']} ensaios (seed {suite['seed']})", header, "-" * len(header)]
    for task, by_mode in suite["summary"].items():
        for mode in ("zero_shot", "finetuned", "baseline"):
            if mode not in by_mode:
                continue
            m = by_mode[mode]
            lines.append(f"{task:<12}{mode:<12}" + "".join(f"{_fmt(m[s], 4):>12}" for s in stats)
                         + f"{m['n']:>6d}{m['n_failed']:>8d}")
    return "\n".join(lines) + "\n"


def write_suite_report(suite: Dict[str, Any], out_dir: Path) -> List[Path]:
    if not suite.get("trials"):
        raise OdeInfValidationError("conjunto de benchmarks vazio: nada a escrever")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = out_dir / "suite_tables.txt"
    summary = out_dir / "suite_report.json"
    trials = out_dir / "suite_trials.jsonl"
    xlsx = out_dir / "suite_report.xlsx"
    atomic_write_text(tables, render_suite(suite))
    atomic_write_json(summary, suite)
    with MetricsLogger(trials) as log:
        for t in suite["trials"]:
            log.log(t)
    wb = Workbook()
    ws = wb.active
    ws.title = "trials"
    cols = list(suite["trials"][0].keys())
    ws.append(cols)
    for t in suite["trials"]:
        ws.append([t[c] for c in cols])
    ws.freeze_panes = "A2"
    save_workbook(wb, xlsx)
    return [tables, summary, trials, xlsx]


def write_plot_entries(entries: Sequence[Dict[str, Any]], path: Path) -> Path:
    atomic_write_json(Path(path), {"entries": list(entries)})
    return Path(path)


BOUNDARY_TABLE = "boundary_stats.txt"
BOUNDARY_PLOT_DATA = "boundary_plot_data.json"


def rejection_table(statistics: Dict[str, Dict[str, Any]]) -> str:
    """Tabela das estatísticas de geração por dimensão (``manifest["statistics"]``)."""
    lines = [f"{'d':>3}{'aceites':>10}{'tentativas':>12}{'rejeição':>10}  motivos"]
    for dim, s in sorted(statistics.items(), key=lambda kv: int(kv[0])):
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(s.get("reasons", {}).items())) or "-"
        lines.append(f"{int(dim):>3}{s['accepted']:>10d}{s['attempted']:>12d}"
                     f"{100.0 * s['rejection_rate']:>9.1f}%  {reasons}")
    return "Estatísticas de rejeição\n" + "\n".join(lines) + "\n"


def write_boundary_report(stats: Sequence[BoundaryStatistics], out_dir: Path,
                          rejection: Dict[str, Dict[str, Any]] = None) -> List[Path]:
    """Tabela de texto, plot data JSON e um SVG por dimensão."""
    from odeinf.plotting import plot_boundary_statistics

    if not stats:
        raise OdeInfValidationError("sem estatísticas de fronteira para escrever")
    out_dir = Path(out_dir)
    text = "\n".join(s.to_table() for s in stats)
    if rejection:
        text = rejection_table(rejection) + "\n" + text
    table = out_dir / BOUNDARY_TABLE
    data = out_dir / BOUNDARY_PLOT_DATA
    atomic_write_text(table, text)
    atomic_write_json(data, {"entries": [s.to_plot_data() for s in stats]})
    paths = [table, data]
    for s in stats:
        paths.append(plot_boundary_statistics(s.to_plot_data(), out_dir / f"boundary_d{s.dimension}.svg"))
    return paths
