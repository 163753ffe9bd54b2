"""
Mini app: estatísticas de um dataset existente, ou taxas de rejeição do
prior sem escrever shards.
"""

import logging

from apps.common import SHARED_DATASET, close_run, open_run
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from core.io_utils import atomic_write_text, require_path
from odeinf.dataset_store import (SPLIT_TRAIN, GenerationSpec, boundary_statistics, load_manifest,
                                  load_records, rejection_statistics)
from odeinf.reporting import rejection_table, write_boundary_report

logger = logging.getLogger(__name__)

# Tentativas por dimensão quando não há dataset
PROBE_ATTEMPTS = 1000


class StatsApp(BaseApp):

    @property
    def name(self) -> str:
        return "stats"

    @property
    def description(self) -> str:
        return "Estatísticas de rejeição e magnitude do campo vs distância à fronteira"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        out_dir = open_run(self.name, config, context, "stats")
        dataset_dir = context.input_path(config.paths.dataset, SHARED_DATASET)

        if dataset_dir is None:
            # Sem dataset: só a taxa de rejeição do prior configurado
            spec = GenerationSpec(config.prior, config.grid, config.corruption, config.dataset, config.seed)
            statistics = {str(d): rejection_statistics(spec, d, PROBE_ATTEMPTS)
                          for d, _c in config.dataset.dimension_counts()}
            path = out_dir / "rejection_stats.txt"
            atomic_write_text(path, rejection_table(statistics))
            return AppResult(success=True, message=f"Taxas de rejeição em {PROBE_ATTEMPTS} tentativas/dimensão",
                             data={"statistics": statistics}, output_files=[path])

        dataset_dir = require_path(dataset_dir, "dataset")
        manifest = load_manifest(dataset_dir)
        dims = sorted(int(d) for d, s in manifest["statistics"].items() if s["accepted"] > 0)
        stats = [boundary_statistics(load_records(dataset_dir, split=SPLIT_TRAIN, dimension=d)) for d in dims]
        files = write_boundary_report(stats, out_dir, rejection=manifest["statistics"])
        for s in stats:
            logger.info("\n" + s.to_table())
        return AppResult(success=True, message=f"Estatísticas de {len(dims)} dimensões em {out_dir}",
                         data={"statistics": manifest["statistics"]}, output_files=files)

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
