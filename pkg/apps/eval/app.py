"""
Mini app: avaliação sobre a grelha (ρ, σ) em sistemas de demonstração (ou do
utilizador) e, havendo dataset, em registos de validação do prior.
"""

import dataclasses
import logging
from pathlib import Path
from typing import List

from apps.common import (SHARED_DATASET, SHARED_PLOT_DATA, close_run, eval_systems, load_model, make_infer,
                         open_run)
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from odeinf.dataset_store import SPLIT_VALIDATION, iter_records
from odeinf.evaluation import EvaluationReport, evaluate_grid, evaluate_records
from odeinf.reporting import PLOT_DATA, write_report

logger = logging.getLogger(__name__)


def evaluate_dataset_records(infer, dataset_dir: Path, config: RunConfig) -> EvaluationReport:
    """Primeiros ``eval.n_records`` registos de validação, em cada célula da grelha."""
    records = []
    for record in iter_records(dataset_dir, split=SPLIT_VALIDATION):
        if len(records) >= config.eval.n_records:
            break
        records.append(record)
    merged = EvaluationReport(thresholds=tuple(config.eval.thresholds),
                              metadata={"seed": config.seed, "n_records": len(records)})
    for ri, rho in enumerate(config.eval.rhos):
        for gi, sigma in enumerate(config.eval.sigmas):
            cell = evaluate_records(infer, records, config.eval, sigma=sigma, rho=rho,
                                    seed=config.seed + 1000 * ri + gi)
            merged.scores.extend(cell.scores)
            for name, m in cell.vf.items():
                merged.vf.setdefault(name, m)
    return merged


class EvalApp(BaseApp):

    @property
    def name(self) -> str:
        return "eval"

    @property
    def description(self) -> str:
        return "Taxas de sucesso (R² > 0.9 / 0.8) de reconstrução e generalização"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        # 1. Modelo e sistemas
        checkpoint = load_model(config, context)
        checkpoint.model.eval()
        infer = make_infer(checkpoint.model)
        systems = eval_systems(config, context)
        eval_config = dataclasses.replace(config.eval, workers=config.effective_workers())

        # 2. Sistemas de demonstração / do utilizador
        out_dir = open_run(self.name, config, context, "eval")
        report = evaluate_grid(infer, systems, eval_config, seed=config.seed)
        files: List[Path] = write_report(report, out_dir)
        if report.plot_data:
            context.shared_data[SHARED_PLOT_DATA] = str(out_dir / PLOT_DATA)
        rates = report.success_rates()

        # 3. Registos do prior (dentro da distribuição)
        dataset_dir = context.input_path(config.paths.dataset, SHARED_DATASET)
        if dataset_dir is not None and dataset_dir.exists() and config.eval.n_records > 0:
            records_report = evaluate_dataset_records(infer, dataset_dir, config)
            if not records_report.is_empty():
                files += write_report(records_report, out_dir / "records")
                rates = {"systems": rates, "records": records_report.success_rates()}

        n_failed = sum(1 for s in report.scores if s.failed)
        return AppResult(
            success=True,
            message=f"{len(report.scores)} tarefas em {len(systems)} sistemas ({n_failed} falhas)",
            data={"success_rates": rates},
            output_files=files,
        )

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
