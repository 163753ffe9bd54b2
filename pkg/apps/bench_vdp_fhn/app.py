"""
Mini app: benchmarks de previsão (Van der Pol) e imputação (FitzHugh-Nagumo)
sobre ``suite.n_trials`` realizações de ruído/amostragem.
"""

import logging

from apps.common import close_run, load_model, make_finetune_infer, make_infer, open_run
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from odeinf.evaluation import run_vdp_fhn_suite
from odeinf.reporting import render_suite, write_suite_report

logger = logging.getLogger(__name__)


class BenchVdpFhnApp(BaseApp):

    @property
    def name(self) -> str:
        return "bench-vdp-fhn"

    @property
    def description(self) -> str:
        return "MSE de teste nos osciladores Van der Pol / FitzHugh-Nagumo (zero-shot e finetune)"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        checkpoint = load_model(config, context)
        checkpoint.model.eval()
        infer = make_infer(checkpoint.model)
        finetune_infer = make_finetune_infer(checkpoint.model, config) if config.suite.finetune else None

        out_dir = open_run(self.name, config, context, "bench")
        suite = run_vdp_fhn_suite(infer, config.suite, seed=config.seed, finetune_infer=finetune_infer)
        files = write_suite_report(suite, out_dir)
        logger.info("\n" + render_suite(suite))

        n_failed = sum(1 for t in suite["trials"] if t.get("failure"))
        return AppResult(success=True,
                         message=f"{len(suite['trials'])} ensaios em {len(config.suite.tasks)} tarefas "
                                 f"({n_failed} com falha)",
                         data={"summary": suite["summary"]}, output_files=files)

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
