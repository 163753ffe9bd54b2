"""
Mini app: avalia o campo inferido de um contexto em pontos de query.

Saída ``field.csv``: colunas ``x1..xd, f1..fd, log_var``.
"""

import io
import logging

import numpy as np

from apps.common import close_run, load_model, open_run, read_context_file, read_queries
from core.base_app import AppResult, BaseApp
from core.config import RunConfig
from core.context import AppContext
from core.io_utils import atomic_write_json, atomic_write_text, require_path
from odeinf.inference_model import VectorFieldEstimator
from odeinf.simulation import bounding_box

logger = logging.getLogger(__name__)

# Pontos por eixo quando não há ficheiro de queries
DEFAULT_GRID = {1: 101, 2: 21, 3: 9}


def default_queries(trajectories) -> np.ndarray:
    """Grelha regular sobre a caixa envolvente das observações."""
    box = bounding_box([t.observations for t in trajectories], expand=0.0)
    d = box.dimension
    axes = [np.linspace(box.low[j], box.high[j], DEFAULT_GRID.get(d, 5)) for j in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


class InferApp(BaseApp):

    @property
    def name(self) -> str:
        return "infer"

    @property
    def description(self) -> str:
        return "Inferência zero-shot do campo vetorial a partir de um ficheiro de contexto"

    def run(self, config: RunConfig, context: AppContext) -> AppResult:
        ctx_path = require_path(context.resolve_path(config.paths.context), "contexto")
        trajectories = read_context_file(ctx_path)
        d = trajectories[0].dimension
        q_path = context.resolve_path(config.paths.queries)
        queries = read_queries(q_path, d) if q_path is not None else default_queries(trajectories)

        checkpoint = load_model(config, context)
        estimator = VectorFieldEstimator(checkpoint.model, trajectories)
        field = estimator(queries)
        log_var = estimator.log_variance(queries)

        out_dir = open_run(self.name, config, context, "infer")
        header = ",".join([f"x{j + 1}" for j in range(d)] + [f"f{j + 1}" for j in range(d)] + ["log_var"])
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack([queries, field, log_var]), delimiter=",", fmt="%.10g",
                   header=header, comments="")
        csv_path = out_dir / "field.csv"
        atomic_write_text(csv_path, buf.getvalue())
        norm = estimator.normalization
        summary_path = out_dir / "normalization.json"
        atomic_write_json(summary_path, {"mu": norm.mu.tolist(), "sigma": norm.sigma.tolist(),
                                         "gamma": norm.gamma, "n_trajectories": len(trajectories),
                                         "n_queries": int(queries.shape[0]), "checkpoint_step": checkpoint.step})
        logger.info(f"{queries.shape[0]} queries avaliadas (d={d})")
        return AppResult(success=True, message=f"Campo avaliado em {queries.shape[0]} pontos",
                         data={"n_queries": int(queries.shape[0]), "dimension": d},
                         output_files=[csv_path, summary_path])

    def cleanup(self, config: RunConfig, context: AppContext) -> None:
        close_run(self.name, context)
