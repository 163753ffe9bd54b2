"""
Gráficos estáticos (SVG) a partir de ficheiros de plot data e logs de métricas.
"""

from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from core.exceptions import OdeInfValidationError  # noqa: E402
from core.logging_setup import read_metrics  # noqa: E402

logger = logging.getLogger(__name__)

# SVG sem data nem id aleatórios
SVG_METADATA = {"Date": None}
matplotlib.rcParams["svg.hashsalt"] = "odeinf"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.svg")
    fig.savefig(tmp, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(fig)
    os.replace(tmp, path)
    return path


def plot_trajectory(entry: Dict[str, Any], path: Path) -> Path:
    """Referência vs trajetória prevista, uma linha por dimensão, com o contexto observado."""
    times = np.asarray(entry["times"])
    ref = np.asarray(entry["reference"])
    d = ref.shape[1]
    fig, axes = plt.subplots(d, 1, figsize=(7, 2.2 * d), sharex=True, squeeze=False)
    pred = entry.get("predicted")
    for i in range(d):
        ax = axes[i, 0]
        ax.plot(times, ref[:, i], color="black", lw=1.5, label="referência")
        if pred is not None:
            ax.plot(times, np.asarray(pred)[:, i], color="tab:red", lw=1.2, ls="--", label="prevista")
        if entry.get("context"):
            ax.scatter(entry["context_times"], np.asarray(entry["context"])[:, i], s=6, color="tab:blue",
                       alpha=0.6, label="contexto")
        ax.set_ylabel(f"x{i + 1}")
    axes[0, 0].set_title(entry.get("system", ""))
    axes[0, 0].legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("t")
    return _save(fig, path)


def plot_phase_portrait(entry: Dict[str, Any], path: Path) -> Path:
    """Campo previsto (setas) e verdadeiro (cinzento) sobre a trajetória de referência."""
    phase = entry["phase"]
    loc = np.asarray(phase["locations"])
    pred = np.asarray(phase["predicted"])
    true = np.asarray(phase["true"])
    ref = np.asarray(entry["reference"])
    fig, ax = plt.subplots(figsize=(5.5, 5))
    ax.quiver(loc[:, 0], loc[:, 1], true[:, 0], true[:, 1], color="0.7", angles="xy")
    ax.quiver(loc[:, 0], loc[:, 1], pred[:, 0], pred[:, 1], color="tab:red", angles="xy", alpha=0.8)
    ax.plot(ref[:, 0], ref[:, 1], color="black", lw=1.2)
    if entry.get("predicted") is not None:
        p = np.asarray(entry["predicted"])
        ax.plot(p[:, 0], p[:, 1], color="tab:red", lw=1.0, ls="--")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"{entry.get('system', '')}: retrato de fase")
    return _save(fig, path)


def plot_boundary_statistics(data: Dict[str, Any], path: Path) -> Path:
    edges = np.asarray(data["edges"])
    centers = 0.5 * (edges[:-1] + edges[1:])

    def arr(values):
        return np.asarray([np.nan if v is None else v for v in values], dtype=np.float64)

    fig, ax = plt.subplots(figsize=(6, 4))
    q = data["quantiles"]
    ax.fill_between(centers, arr(q["q05"]), arr(q["q95"]), color="tab:blue", alpha=0.15, label="q05-q95")
    ax.fill_between(centers, arr(q["q25"]), arr(q["q75"]), color="tab:blue", alpha=0.3, label="q25-q75")
    ax.plot(centers, arr(data["mean"]), color="tab:red", marker="o", label="média")
    ax.plot(centers, arr(data["median"]), color="black", marker=".", label="mediana")
    ax.set_xlabel("distância relativa à fronteira")
    ax.set_ylabel("|f(x)|")
    ax.set_yscale("log")
    ax.set_title(f"d = {data['dimension']} ({data['n_records']} sistemas)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_training_curves(metrics_path: Path, path: Path, val_path: Optional[Path] = None) -> Path:
    rows = [r for r in read_metrics(metrics_path) if not r.get("skipped")]
    if not rows:
        raise OdeInfValidationError(f"log de métricas vazio: {metrics_path}")
    steps = np.asarray([r["step"] for r in rows])
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    for ax, key, label in zip(axes.ravel(), ("loss", "mae", "mean_u", "grad_norm"),
                              ("perda", "MAE", "U médio", "norma do gradiente")):
        ax.plot(steps, [r[key] for r in rows], lw=0.8)
        ax.set_title(label)
    if val_path is not None and Path(val_path).exists():
        val = read_metrics(val_path)
        if val:
            axes[0, 0].plot([v["step"] for v in val], [v["val_loss"] for v in val], color="tab:red",
                            marker="o", ms=3, label="validação")
            axes[0, 1].plot([v["step"] for v in val], [v["val_mae"] for v in val], color="tab:red",
                            marker="o", ms=3)
            axes[0, 0].legend(fontsize=8)
    for ax in axes[1]:
        ax.set_xlabel("passo")
    return _save(fig, path)


def plottable_entries(data: Dict[str, Any]) -> List[Dict[str, Any]]:
    """
    Entradas desenháveis de um ficheiro de plot data.

    Raises:
        OdeInfValidationError: nenhuma entrada desenhável
    """
    entries = data.get("entries", [data] if "kind" in data else [])
    out = []
    for e in entries:
        if e.get("kind") == "boundary_statistics" and e.get("edges"):
            out.append(e)
        elif e.get("kind") == "trajectory" and e.get("reference") is not None:
            out.append(e)
    if not out:
        raise OdeInfValidationError("plot data vazio: nada a desenhar")
    return out


def render_plot_data(data: Dict[str, Any], out_dir: Path) -> List[Path]:
    """
    Desenha todas as entradas de um ficheiro de plot data.

    Raises:
        OdeInfValidationError: sem entradas desenháveis (nenhum ficheiro é criado)
    """
    entries = plottable_entries(data)
    out_dir = Path(out_dir)
    paths = []
    for e in entries:
        if e["kind"] == "boundary_statistics":
            paths.append(plot_boundary_statistics(e, out_dir / f"boundary_d{e['dimension']}.svg"))
            continue
        name = e.get("system", "system")
        paths.append(plot_trajectory(e, out_dir / f"{name}_trajectory.svg"))
        if e.get("phase"):
            paths.append(plot_phase_portrait(e, out_dir / f"{name}_phase.svg"))
    logger.info(f"{len(paths)} gráficos escritos em {out_dir}")
    return paths
