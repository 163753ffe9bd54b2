"""
Mini app: gráficos SVG a partir de plot data (trajetórias, retratos de fase,
estatísticas de fronteira) e do log de métricas do treino.
"""

import logging
from pathlib import Path
from typing import List

from apps.common import SHARED_METRICS, SHARED_PLOT_DATA, close_run, open_run
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from core.exceptions import OdeInfIOError, OdeInfValidationError
from core.io_utils import load_json, require_path
from core.logging_setup import read_metrics
from odeinf.plotting import plot_training_curves, plottable_entries, render_plot_data

logger = logging.getLogger(__name__)


class PlotApp(BaseApp):

    @property
    def name(self) -> str:
        return "plot"

    @property
    def description(self) -> str:
        return "Renderiza plot data e curvas de treino para SVG"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        plot_path = context.input_path(config.paths.plot_data, SHARED_PLOT_DATA)
        metrics_path = context.input_path(config.paths.metrics, SHARED_METRICS)
        if plot_path is None and metrics_path is None:
            raise OdeInfIOError("plot: configure paths.plot_data ou paths.metrics")

        # 1. Validar todos os inputs antes de escrever qualquer ficheiro
        data = None
        if plot_path is not None:
            data = load_json(require_path(plot_path, "plot data"))
            if not isinstance(data, dict):
                raise OdeInfValidationError(f"{plot_path}: plot data deve ser um objeto JSON")
            plottable_entries(data)
        if metrics_path is not None:
            rows = read_metrics(require_path(metrics_path, "log de métricas"))
            if not any(not r.get("skipped") for r in rows):
                raise OdeInfValidationError(f"log de métricas vazio: {metrics_path}")

        # 2. Desenhar
        out_dir = open_run(self.name, config, context, "plots")
        files: List[Path] = []
        if data is not None:
            files += render_plot_data(data, out_dir)
        if metrics_path is not None:
            val_path = metrics_path.with_name("val_metrics.jsonl")
            files.append(plot_training_curves(metrics_path, out_dir / "training_curves.svg", val_path=val_path))
        return AppResult(success=True, message=f"{len(files)} gráficos em {out_dir}", output_files=files)

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
