"""
Mini app: adapta um checkpoint pré-treinado a um contexto observado.
"""

import logging

from apps.common import SHARED_CHECKPOINT, close_run, load_model, open_run, read_context_file
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from core.io_utils import require_path
from odeinf.checkpoint import save_checkpoint
from odeinf.training import finetune

logger = logging.getLogger(__name__)


class FinetuneApp(BaseApp):

    @property
    def name(self) -> str:
        return "finetune"

    @property
    def description(self) -> str:
        return "Finetune por rollouts de Euler diferenciáveis sobre as trajetórias do contexto"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        # 1. Inputs
        ctx_path = require_path(context.resolve_path(config.paths.context), "contexto")
        trajectories = read_context_file(ctx_path)
        val_path = context.resolve_path(config.paths.validation_context)
        validation = read_context_file(val_path) if val_path is not None else None
        checkpoint = load_model(config, context)

        # 2. Finetune com seleção pela melhor época de validação
        out_dir = open_run(self.name, config, context, "finetune")
        selection_log = out_dir / "selection.jsonl"
        result = finetune(checkpoint.model, trajectories, config.finetune, validation=validation,
                          seed=config.seed, selection_log=selection_log)

        # 3. Checkpoint adaptado
        path = save_checkpoint(out_dir / "finetuned.ckpt", checkpoint.model, checkpoint.step,
                               extra={"finetune": {"best_epoch": result.best_epoch,
                                                   "best_val_loss": result.best_val_loss,
                                                   "initial_val_loss": result.initial_val_loss,
                                                   "context": str(ctx_path)}})
        context.shared_data[SHARED_CHECKPOINT] = str(path)
        return AppResult(
            success=True,
            message=f"Melhor época {result.best_epoch}: val {result.best_val_loss:.5g} "
                    f"(inicial {result.initial_val_loss:.5g})",
            data={"best_epoch": result.best_epoch, "best_val_loss": result.best_val_loss,
                  "initial_val_loss": result.initial_val_loss},
            output_files=[path, selection_log],
        )

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
