"""
Mini app: gera o dataset sintético (shards + manifest + estatísticas de fronteira).
"""

import logging
from typing import Optional, Tuple

from apps.common import SHARED_DATASET, close_run, open_run
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from odeinf.dataset_store import SPLIT_TRAIN, boundary_statistics, generate_dataset, load_records
from odeinf.reporting import write_boundary_report

logger = logging.getLogger(__name__)


class GenerateApp(BaseApp):
    """Amostra campos do prior, simula, filtra, corrompe e grava shards."""

    @property
    def name(self) -> str:
        return "generate"

    @property
    def description(self) -> str:
        return "Gera o dataset de sistemas polinomiais (shards, manifest, estatísticas)"

    def validate_config(self, config: RunConfig) -> Tuple[bool, Optional[str]]:
        if not any(c > 0 for _d, c in config.dataset.dimension_counts()):
            return False, "dataset.counts não pede nenhum registo"
        return True, None

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        # 1. Diretório de output e manifest do run
        out_dir = open_run(self.name, config, context, "dataset")
        workers = config.effective_workers()
        logger.info(f"Geração: contagens {dict(config.dataset.dimension_counts())}, seed {config.seed}, "
                    f"{workers} workers")

        # 2. Geração (resultado independente do número de workers)
        manifest = generate_dataset(config.prior, config.dataset, config.grid, config.corruption,
                                    global_seed=config.seed, out_dir=out_dir, workers=workers)

        # 3. Estatísticas de fronteira sobre o split de treino
        stats = []
        for dim, count in config.dataset.dimension_counts():
            if count > 0:
                stats.append(boundary_statistics(load_records(out_dir, split=SPLIT_TRAIN, dimension=dim)))
        report_files = write_boundary_report(stats, out_dir / "stats", rejection=manifest["statistics"])

        context.shared_data[SHARED_DATASET] = str(out_dir)
        n_train = len(manifest["splits"][SPLIT_TRAIN])
        return AppResult(
            success=True,
            message=f"{n_train} registos de treino e {len(manifest['splits']['validation'])} de validação "
                    f"em {len(manifest['shards'])} shards",
            data={"statistics": manifest["statistics"], "dataset_dir": str(out_dir)},
            output_files=[out_dir / "manifest.json"] + [out_dir / s["path"] for s in manifest["shards"]]
                         + report_files,
        )

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
