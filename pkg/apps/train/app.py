"""
Mini app: pré-treino do modelo no dataset gerado.
"""

import dataclasses
import logging
from typing import Optional, Tuple

import torch

from apps.common import SHARED_CHECKPOINT, SHARED_DATASET, SHARED_METRICS, close_run, open_run
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from core.io_utils import require_path
from odeinf.checkpoint import load_checkpoint, restore_optimizer
from odeinf.dataset_store import SPLIT_TRAIN, SPLIT_VALIDATION, load_records
from odeinf.inference_model import build_model, count_parameters_by_role
from odeinf.training import make_optimizer, pretrain

logger = logging.getLogger(__name__)


class TrainApp(BaseApp):

    @property
    def name(self) -> str:
        return "train"

    @property
    def description(self) -> str:
        return "Pré-treino do estimador de campos (métricas JSONL + checkpoints)"

    def validate_config(self, config: RunConfig) -> Tuple[bool, Optional[str]]:
        if config.model_config().d_max < max(d for d, _c in config.dataset.dimension_counts()):
            return False, "model.d_max menor que a maior dimensão do dataset"
        return True, None

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        # 1. Inputs
        dataset_dir = require_path(context.input_path(config.paths.dataset, SHARED_DATASET), "dataset")
        out_dir = open_run(self.name, config, context, "train")
        train_records = load_records(dataset_dir, split=SPLIT_TRAIN)
        val_records = load_records(dataset_dir, split=SPLIT_VALIDATION)
        logger.info(f"Treino: {len(train_records)} registos, validação: {len(val_records)}")

        # 2. Modelo novo ou retomado de um checkpoint
        dtype = config.training.torch_dtype
        resume = context.resolve_path(config.paths.resume)
        optimizer = None
        start_step = 0
        if resume is not None:
            checkpoint = load_checkpoint(require_path(resume, "checkpoint de retoma"), dtype=dtype)
            model = checkpoint.model
            optimizer = make_optimizer(model, config.training)
            restore_optimizer(optimizer, checkpoint)
            start_step = checkpoint.step
            if "torch" in checkpoint.rng_state:
                torch.set_rng_state(torch.as_tensor(checkpoint.rng_state["torch"], dtype=torch.uint8))
            logger.info(f"Retoma a partir do passo {start_step}: {resume}")
        else:
            model_config = dataclasses.replace(config.model_config(), dropout=config.training.dropout)
            model = build_model(model_config, seed=config.seed, dtype=dtype)
        logger.info(f"Parâmetros por componente: {count_parameters_by_role(model)}")

        # 3. Loop de treino
        result = pretrain(model, train_records, val_records, config.training, seed=config.seed,
                          out_dir=out_dir, start_step=start_step, optimizer=optimizer)

        last = out_dir / "checkpoints" / "last.ckpt"
        if last.exists():
            context.shared_data[SHARED_CHECKPOINT] = str(last)
        context.shared_data[SHARED_METRICS] = str(out_dir / "metrics.jsonl")
        return AppResult(
            success=True,
            message=f"{result.steps_run} passos ({len(result.skipped_steps)} ignorados), "
                    f"loss final {result.final_loss}",
            data={"steps_run": result.steps_run, "skipped_steps": result.skipped_steps,
                  "final_loss": result.final_loss, "last_validation": result.last_validation},
            output_files=[out_dir / "metrics.jsonl", out_dir / "val_metrics.jsonl"] + result.checkpoints,
        )

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
