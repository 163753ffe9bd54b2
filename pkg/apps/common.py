"""
Código partilhado pelas mini apps: diretórios de run, leitura de contextos,
modelos a partir de checkpoints e sistemas de avaliação.
"""

import copy
import io
import logging
import re
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from core.config import RunConfig
from core.context import AppContext
from core.exceptions import OdeInfIOError, OdeInfValidationError
from core.io_utils import require_path
from core.logging_setup import attach_file_handler
from odeinf.checkpoint import Checkpoint, load_checkpoint
from odeinf.corruption import CorruptedTrajectory
from odeinf.dataset_store import load_shard
from odeinf.demo_systems import demo_systems, get_system, load_systems
from odeinf.evaluation import EvalSystem, FieldFn, InferFn
from odeinf.inference_model import VectorFieldEstimator, VectorFieldModel
from odeinf.training import finetune

logger = logging.getLogger(__name__)

SHARED_DATASET = "dataset_dir"
SHARED_CHECKPOINT = "checkpoint"
SHARED_PLOT_DATA = "plot_data"
SHARED_METRICS = "metrics"


def open_run(app_name: str, config: RunConfig, context: AppContext, subdir: str) -> Path:
    """Cria ``<out>/<subdir>``, liga o log do run e grava config + seed + versões."""
    out_dir = context.get_or_create_workdir(subdir)
    handler = attach_file_handler(context.get_or_create_logdir() / f"{app_name}.log")
    context.shared_data[f"_log_handler:{app_name}"] = handler
    context.write_run_manifest(config.to_dict(), subdir=subdir, extra={"app": app_name})
    return out_dir


def close_run(app_name: str, context: AppContext) -> None:
    handler = context.shared_data.pop(f"_log_handler:{app_name}", None)
    if handler is not None:
        logging.getLogger().removeHandler(handler)
        handler.close()


# ---------------------------------------------------------------------------
# Contextos
# ---------------------------------------------------------------------------

def _parse_text_block(block: str, path: Path) -> CorruptedTrajectory:
    delimiter = "," if "," in block else (";" if ";" in block else None)
    try:
        data = np.loadtxt(io.StringIO(block), delimiter=delimiter, ndmin=2, dtype=np.float64)
    except ValueError as e:
        raise OdeInfValidationError(f"{path}: linha inválida no contexto: {e}") from e
    if data.shape[1] < 2:
        raise OdeInfValidationError(f"{path}: esperadas colunas t, x1..xd")
    return CorruptedTrajectory.from_observations(data[:, 0], data[:, 1:])


def read_context_file(path: Path, record_index: int = 0) -> List[CorruptedTrajectory]:
    """
    Contexto de inferência a partir de um shard (trajetórias corrompidas do
    registo ``record_index``) ou de texto delimitado ``t, x1..xd`` com as
    trajetórias separadas por linhas em branco. Linhas começadas por ``#``
    são comentários.
    """
    path = require_path(path, "ficheiro de contexto")
    if path.suffix == ".shard":
        records = load_shard(path)
        if not 0 <= record_index < len(records):
            raise OdeInfValidationError(f"{path}: registo {record_index} inexistente ({len(records)} registos)")
        return list(records[record_index].corrupted)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise OdeInfIOError(f"Falha ao ler {path}: {e}", path=path) from e
    lines = [ln for ln in text.splitlines() if not ln.lstrip().startswith("#")]
    blocks = [b for b in re.split(r"\n\s*\n", "\n".join(lines)) if b.strip()]
    if not blocks:
        raise OdeInfValidationError(f"{path}: contexto vazio")
    context = [_parse_text_block(b, path) for b in blocks]
    if len({c.dimension for c in context}) != 1:
        raise OdeInfValidationError(f"{path}: trajetórias com dimensões diferentes")
    return context


def read_queries(path: Path, dimension: int) -> np.ndarray:
    """Pontos de query, uma linha por ponto (``x1..xd``)."""
    path = require_path(path, "ficheiro de queries")
    try:
        text = path.read_text(encoding="utf-8")
        delimiter = "," if "," in text else None
        queries = np.loadtxt(io.StringIO(text), delimiter=delimiter, ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as e:
        raise OdeInfIOError(f"Falha ao ler queries {path}: {e}", path=path) from e
    if queries.shape[1] != dimension:
        raise OdeInfValidationError(f"{path}: queries com {queries.shape[1]} colunas, contexto com d={dimension}")
    return queries


# ---------------------------------------------------------------------------
# Modelos
# ---------------------------------------------------------------------------

def load_model(config: RunConfig, context: AppContext) -> Checkpoint:
    path = require_path(context.input_path(config.paths.checkpoint, SHARED_CHECKPOINT), "checkpoint")
    checkpoint = load_checkpoint(path, dtype=config.training.torch_dtype)
    logger.info(f"Checkpoint carregado: {path} (passo {checkpoint.step})")
    return checkpoint


def make_infer(model: VectorFieldModel) -> InferFn:
    """Inferência zero-shot: um forward pass por contexto."""
    def infer(ctx: Sequence[CorruptedTrajectory]) -> FieldFn:
        return VectorFieldEstimator(model, ctx)
    return infer


def make_finetune_infer(model: VectorFieldModel, config: RunConfig) -> InferFn:
    """Finetune de uma cópia dos pesos em cada contexto, depois inferência."""
    def infer(ctx: Sequence[CorruptedTrajectory]) -> FieldFn:
        adapted = copy.deepcopy(model)
        finetune(adapted, ctx, config.finetune, seed=config.seed)
        return VectorFieldEstimator(adapted, ctx)
    return infer


def eval_systems(config: RunConfig, context: AppContext) -> List[EvalSystem]:
    """Sistemas do ficheiro do utilizador, os nomeados na config, ou todos os de demonstração."""
    systems_file: Optional[Path] = context.resolve_path(config.eval.systems_file)
    if systems_file is not None:
        systems = load_systems(require_path(systems_file, "ficheiro de sistemas"))
    elif config.eval.systems:
        systems = [get_system(name) for name in config.eval.systems]
    else:
        systems = demo_systems()
    return [EvalSystem.from_demo(s) for s in systems]
