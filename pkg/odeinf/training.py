"""
Pré-treino sobre o prior sintético (perda do campo ponderada pela incerteza)
e finetuning por trajetórias (solver de Euler desenrolado).
"""

from __future__ import annotations

import copy
import logging
import queue
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from core.exceptions import NonFiniteLossError, OdeInfConfigError, OdeInfValidationError
from core.logging_setup import MetricsLogger
from odeinf.checkpoint import save_checkpoint
from odeinf.corruption import CorruptedTrajectory
from odeinf.dataset_store import Batch, SystemRecord, make_batch
from odeinf.inference_model import ContextBatch, TorchNormalization, VectorFieldModel, context_to_batch
from odeinf.ode_prior import evaluate_field

logger = logging.getLogger(__name__)

VALIDATION_STREAM = 2 ** 31 - 1


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-5
    weight_decay: float = 1e-4
    batch_size: int = 64
    clip_norm: float = 10.0
    dropout: float = 0.1
    k_range: Tuple[int, int] = (1, 9)
    steps: int = 1000
    n_queries: int = 256
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    validate_every: int = 100
    validation_size: int = 64
    checkpoint_every: int = 500
    prefetch: int = 4
    dtype: str = "float32"

    def validate(self) -> None:
        if self.lr < 0 or self.weight_decay < 0:
            raise OdeInfConfigError("training.lr e training.weight_decay devem ser >= 0")
        if self.batch_size < 1 or self.steps < 0 or self.n_queries < 1:
            raise OdeInfConfigError("training.batch_size, training.steps e training.n_queries devem ser positivos")
        if self.clip_norm <= 0:
            raise OdeInfConfigError("training.clip_norm deve ser > 0")
        lo, hi = self.k_range
        if not 1 <= lo <= hi:
            raise OdeInfConfigError(f"training.k_range inválido: {self.k_range}")
        if self.validate_every < 1 or self.checkpoint_every < 1 or self.prefetch < 1:
            raise OdeInfConfigError("training.validate_every, checkpoint_every e prefetch devem ser >= 1")
        if self.dtype not in ("float32", "float64"):
            raise OdeInfConfigError(f"training.dtype inválido: {self.dtype}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)


@dataclass(frozen=True)
class FinetuneConfig:
    lr: float = 1e-4
    weight_decay: float = 0.0
    epochs: int = 200
    n_steps: int = 25
    substeps: int = 20
    step_noise: bool = False
    noise_divisor: float = 5.0
    select_on_validation: bool = True
    clip_norm: float = 10.0

    def validate(self) -> None:
        if self.n_steps < 2:
            raise OdeInfConfigError("finetune.n_steps deve ser >= 2")
        if self.epochs < 0 or self.substeps < 1:
            raise OdeInfConfigError("finetune.epochs deve ser >= 0 e finetune.substeps >= 1")
        if self.lr < 0 or self.noise_divisor <= 0:
            raise OdeInfConfigError("finetune.lr deve ser >= 0 e finetune.noise_divisor > 0")


# ---------------------------------------------------------------------------
# Queries e perda
# ---------------------------------------------------------------------------

def sample_query_locations(record: SystemRecord, n_queries: int, rng: np.random.Generator,
                           trajectory_indices: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    n//2 localizações sobre estados das trajetórias (uniformes entre eles) e
    o resto uniforme na caixa; alvos exatos via ``evaluate_field``.
    """
    if n_queries < 1:
        raise OdeInfValidationError("n_queries deve ser >= 1")
    idx = list(range(record.clean.n_trajectories)) if trajectory_indices is None else list(trajectory_indices)
    states = record.clean.states[idx].reshape(-1, record.dimension)
    n_traj = n_queries // 2
    picks = states[rng.integers(0, states.shape[0], size=n_traj)]
    box_pts = rng.uniform(record.box.low, record.box.high, size=(n_queries - n_traj, record.dimension))
    locations = np.concatenate([picks, box_pts], axis=0)
    return locations, evaluate_field(record.vf, locations)


def _residuals(pred: torch.Tensor, target: torch.Tensor, dim_mask: torch.Tensor) -> torch.Tensor:
    dm = dim_mask[:, None, :]
    return ((pred - target).abs() * dm).sum(dim=-1) / dm.sum(dim=-1).clamp_min(1.0)


def vf_loss(pred: torch.Tensor, u: torch.Tensor, target: torch.Tensor, dim_mask: torch.Tensor) -> torch.Tensor:
    """
    Perda de Laplace heterocedástica: média sobre queries de e^(-U)·r + U,
    com r = erro absoluto médio nas dimensões ativas.
    """
    if pred.shape != target.shape or pred.shape[:-1] != u.shape:
        raise OdeInfValidationError(f"formas incompatíveis: {tuple(pred.shape)}, {tuple(u.shape)}, "
                                    f"{tuple(target.shape)}")
    for name, t in (("pred", pred), ("u", u), ("target", target)):
        if not torch.all(torch.isfinite(t)):
            raise OdeInfValidationError(f"vf_loss: {name} com valores não finitos")
    r = _residuals(pred, target, dim_mask)
    return (torch.exp(-u) * r + u).mean()


@dataclass
class StepMetrics:
    step: int
    loss: float
    mae: float
    mean_u: float
    grad_norm: float = 0.0

    def to_log(self) -> Dict[str, Any]:
        return asdict(self)


def batch_loss(model: VectorFieldModel, batch: Batch) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Perda no espaço normalizado: os alvos são divididos por σ·γ do contexto.

    Returns:
        (loss, mae, mean_u) e levanta NonFiniteLossError com os registos culpados
    """
    ctx = batch.context
    pred, u, norm = model(ctx, batch.queries)
    target = batch.targets / norm.field_scale() * ctx.dim_mask[:, None, :]
    per_record = (torch.exp(-u) * _residuals(pred, target, ctx.dim_mask) + u).mean(dim=1)
    bad = ~torch.isfinite(per_record)
    if bad.any():
        ids = [batch.record_ids[i] for i in torch.nonzero(bad).flatten().tolist()]
        raise NonFiniteLossError(f"perda não finita nos registos {ids}", record_ids=ids)
    loss = vf_loss(pred, u, target, ctx.dim_mask)
    mae = _residuals(pred, target, ctx.dim_mask).mean()
    return loss, mae, u.mean()


def make_optimizer(model: VectorFieldModel, config: TrainConfig) -> torch.optim.AdamW:
    return torch.optim.AdamW(model.parameters(), lr=config.lr, betas=config.betas, eps=config.eps,
                             weight_decay=config.weight_decay)


def train_step(model: VectorFieldModel, optimizer: torch.optim.Optimizer, batch: Batch,
               config: TrainConfig, step: int = 0) -> StepMetrics:
    """
    Um passo AdamW após clipping da norma global do gradiente.
    A norma reportada é a anterior ao clipping.
    """
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss, mae, mean_u = batch_loss(model, batch)
    loss.backward()
    grad_norm = torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
    if not torch.isfinite(grad_norm):
        optimizer.zero_grad(set_to_none=True)
        raise NonFiniteLossError(f"gradiente não finito no passo {step}", record_ids=list(batch.record_ids))
    optimizer.step()
    return StepMetrics(step=step, loss=float(loss.detach()), mae=float(mae.detach()),
                       mean_u=float(mean_u.detach()), grad_norm=float(grad_norm))


@torch.no_grad()
def evaluate_batch(model: VectorFieldModel, batch: Batch, step: int = 0) -> StepMetrics:
    was_training = model.training
    model.eval()
    try:
        loss, mae, mean_u = batch_loss(model, batch)
    finally:
        model.train(was_training)
    return StepMetrics(step=step, loss=float(loss), mae=float(mae), mean_u=float(mean_u))


# ---------------------------------------------------------------------------
# Verificação de gradientes
# ---------------------------------------------------------------------------

@dataclass
class GradientCheckReport:
    n_coordinates: int
    max_relative_error: float
    mean_relative_error: float
    worst_parameter: str

    def passed(self, tolerance: float = 1e-3) -> bool:
        return self.max_relative_error <= tolerance


def gradient_check(model: VectorFieldModel, batch: Batch, n_coordinates: int = 200,
                   h: float = 1e-5, seed: int = 0, floor: float = 1e-6) -> GradientCheckReport:
    """
    Compara gradientes analíticos da perda com diferenças centrais numa
    amostra aleatória de coordenadas. Corre em float64 e modo de inferência.
    """
    model = copy.deepcopy(model).to(torch.float64)
    model.eval()
    batch = batch.to(dtype=torch.float64)
    params = [(name, p) for name, p in model.named_parameters() if p.requires_grad]
    model.zero_grad(set_to_none=True)
    loss, _mae, _u = batch_loss(model, batch)
    loss.backward()

    sizes = np.array([p.numel() for _, p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(total, size=min(max(n_coordinates, 1), total), replace=False))

    errors = []
    worst = ("", -1.0)
    with torch.no_grad():
        for flat in chosen:
            pi = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, p = params[pi]
            local = int(flat - offsets[pi])
            view = p.data.view(-1)
            analytic = float(p.grad.view(-1)[local]) if p.grad is not None else 0.0
            orig = float(view[local])
            view[local] = orig + h
            plus = float(batch_loss(model, batch)[0])
            view[local] = orig - h
            minus = float(batch_loss(model, batch)[0])
            view[local] = orig
            numeric = (plus - minus) / (2 * h)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            errors.append(err)
            if err > worst[1]:
                worst = (f"{name}[{local}]", err)
    errs = np.asarray(errors)
    return GradientCheckReport(n_coordinates=int(errs.size), max_relative_error=float(errs.max()),
                               mean_relative_error=float(errs.mean()), worst_parameter=worst[0])


# ---------------------------------------------------------------------------
# Loop de pré-treino
# ---------------------------------------------------------------------------

def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(step,)))


def build_training_batch(records: Sequence[SystemRecord], config: TrainConfig, seed: int, step: int) -> Batch:
    """O lote do passo ``step`` depende apenas de (seed, step)."""
    rng = _step_rng(seed, step)
    n = len(records)
    picks = rng.choice(n, size=config.batch_size, replace=n < config.batch_size)
    chosen = [records[int(i)] for i in picks]
    return make_batch(chosen, config.k_range, rng, n_queries=config.n_queries,
                      query_sampler=sample_query_locations, dtype=config.torch_dtype)


def build_validation_batch(records: Sequence[SystemRecord], config: TrainConfig, seed: int) -> Batch:
    """Lote fixo de validação; o contexto usa todas as trajetórias disponíveis."""
    rng = _step_rng(seed, VALIDATION_STREAM)
    chosen = list(records[:config.validation_size])
    return make_batch(chosen, config.k_range, rng, n_queries=config.n_queries,
                      query_sampler=sample_query_locations, dtype=config.torch_dtype, use_all=True)


class BatchPrefetcher:
    """Produtor numa thread com fila limitada; a ordem dos lotes é fixa."""

    _DONE = object()

    def __init__(self, build: Callable[[int], Batch], steps: Sequence[int], maxsize: int):
        self._queue: "queue.Queue[Any]" = queue.Queue(maxsize=maxsize)
        self._build = build
        self._steps = list(steps)
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="batch-prefetch", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        try:
            for step in self._steps:
                if self._stop.is_set():
                    return
                self._put((step, self._build(step)))
        except Exception as e:  # propagado ao consumidor
            self._put(e)
            return
        self._put(self._DONE)

    def _put(self, item: Any) -> None:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return
            except queue.Full:
                continue

    def __iter__(self):
        while True:
            item = self._queue.get()
            if item is self._DONE:
                return
            if isinstance(item, Exception):
                raise item
            yield item

    def close(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)


@dataclass
class TrainResult:
    steps_run: int
    skipped_steps: List[int] = field(default_factory=list)
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    last_validation: Optional[Dict[str, Any]] = None
    checkpoints: List[Path] = field(default_factory=list)


def pretrain(model: VectorFieldModel, train_records: Sequence[SystemRecord],
             val_records: Sequence[SystemRecord], config: TrainConfig, seed: int, out_dir: Path,
             start_step: int = 0, optimizer: Optional[torch.optim.Optimizer] = None) -> TrainResult:
    """
    Loop de pré-treino: métricas por passo em ``metrics.jsonl``, validação
    periódica em ``val_metrics.jsonl`` e checkpoints em ``checkpoints/``.
    """
    config.validate()
    if not train_records:
        raise OdeInfValidationError("pretrain sem registos de treino")
    out_dir = Path(out_dir)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    model = model.to(config.torch_dtype)
    if optimizer is None:
        optimizer = make_optimizer(model, config)
    torch.manual_seed(seed + start_step)
    val_batch = build_validation_batch(val_records, config, seed) if val_records else None
    result = TrainResult(steps_run=0)

    steps = range(start_step, config.steps)
    prefetcher = BatchPrefetcher(lambda s: build_training_batch(train_records, config, seed, s),
                                 steps, config.prefetch)
    append = start_step > 0
    try:
        with MetricsLogger(out_dir / "metrics.jsonl", append=append) as metrics, \
                MetricsLogger(out_dir / "val_metrics.jsonl", append=append) as val_metrics:
            for step, batch in prefetcher:
                try:
                    m = train_step(model, optimizer, batch, config, step=step)
                except NonFiniteLossError as e:
                    logger.warning(f"Passo {step} ignorado: {e}")
                    result.skipped_steps.append(step)
                    metrics.log({"step": step, "skipped": True, "record_ids": e.record_ids})
                    continue
                metrics.log(m.to_log())
                if result.initial_loss is None:
                    result.initial_loss = m.loss
                result.final_loss = m.loss
                result.steps_run += 1
                done = step + 1
                if val_batch is not None and (done % config.validate_every == 0 or done == config.steps):
                    v = evaluate_batch(model, val_batch, step=done)
                    entry = {"step": done, "val_loss": v.loss, "val_mae": v.mae, "val_mean_u": v.mean_u}
                    val_metrics.log(entry)
                    result.last_validation = entry
                    logger.info(f"Passo {done}: loss={m.loss:.4f} val_loss={v.loss:.4f}")
                if done % config.checkpoint_every == 0 or done == config.steps:
                    rng_state = {"seed": seed, "step": done, "torch": torch.get_rng_state().numpy()}
                    path = save_checkpoint(ckpt_dir / f"step_{done:06d}.ckpt", model, done,
                                           rng_state=rng_state, optimizer=optimizer)
                    save_checkpoint(ckpt_dir / "last.ckpt", model, done, rng_state=rng_state, optimizer=optimizer)
                    result.checkpoints.append(path)
    finally:
        prefetcher.close()
    return result


# ---------------------------------------------------------------------------
# Finetuning por trajetórias
# ---------------------------------------------------------------------------

@dataclass
class SegmentGroup:
    """S segmentos com o mesmo número de passos."""
    x0: torch.Tensor         # (S, d)
    intervals: torch.Tensor  # (S, n)
    targets: torch.Tensor    # (S, n, d)


def segment_starts(length: int, n_steps: int) -> Tuple[int, np.ndarray]:
    """
    Passos efetivos (n_steps limitado a ℓ - 1) e n_IC = floor(2ℓ / n_steps)
    inícios igualmente espaçados.
    """
    if length < 2:
        raise OdeInfValidationError("trajetória com menos de 2 observações")
    steps = min(n_steps, length - 1)
    n_ic = max(1, (2 * length) // steps)
    starts = np.unique(np.round(np.linspace(0, length - 1 - steps, n_ic)).astype(int))
    return steps, starts


def build_segments(trajectories: Sequence[CorruptedTrajectory], n_steps: int,
                   dtype: torch.dtype = torch.float32) -> List[SegmentGroup]:
    groups: Dict[int, Dict[str, list]] = {}
    for traj in trajectories:
        steps, starts = segment_starts(len(traj), n_steps)
        g = groups.setdefault(steps, {"x0": [], "intervals": [], "targets": []})
        for s in starts:
            g["x0"].append(traj.observations[s])
            g["intervals"].append(np.diff(traj.times[s:s + steps + 1]))
            g["targets"].append(traj.observations[s + 1:s + steps + 1])
    return [SegmentGroup(torch.as_tensor(np.stack(g["x0"]), dtype=dtype),
                         torch.as_tensor(np.stack(g["intervals"]), dtype=dtype),
                         torch.as_tensor(np.stack(g["targets"]), dtype=dtype))
            for _steps, g in sorted(groups.items())]


def segment_loss(model: VectorFieldModel, ctx: ContextBatch, norm: TorchNormalization,
                 groups: Sequence[SegmentGroup], substeps: int,
                 noise: Optional[Tuple[float, torch.Generator]] = None) -> torch.Tensor:
    """
    Soma, sobre condições iniciais, do MAE de cada segmento (unidades originais).
    O campo é o do modelo condicionado no contexto completo; Euler desenrolado.
    """
    c = model.encode_context(ctx, norm)
    d_max = model.config.d_max
    scale = norm.field_scale()
    total = torch.zeros((), dtype=ctx.states.dtype)
    for g in groups:
        s, d = g.x0.shape
        pad = torch.zeros((1, s, d_max - d), dtype=g.x0.dtype)

        def field_fn(x: torch.Tensor) -> torch.Tensor:
            q = torch.cat([x[None], pad], dim=-1)
            xn = norm.normalize_states(q, ctx.dim_mask)
            f, _u = model.decode_query(xn, c, ctx.mask, ctx.dim_mask)
            return (f * scale)[0, :, :d]

        x = g.x0
        preds = []
        for i in range(g.intervals.shape[1]):
            h = (g.intervals[:, i] / substeps)[:, None]
            for _ in range(substeps):
                x = x + h * field_fn(x)
            if noise is not None:
                divisor, gen = noise
                x = x + torch.randn(x.shape, generator=gen, dtype=x.dtype) * (g.intervals[:, i:i + 1] / divisor)
            preds.append(x)
        pred = torch.stack(preds, dim=1)
        total = total + (pred - g.targets).abs().mean(dim=(1, 2)).sum()
    return total


@dataclass
class FinetuneResult:
    best_epoch: int
    best_val_loss: float
    initial_val_loss: float
    history: List[Dict[str, Any]] = field(default_factory=list)


def finetune(model: VectorFieldModel, context: Sequence[CorruptedTrajectory], config: FinetuneConfig,
             validation: Optional[Sequence[CorruptedTrajectory]] = None, seed: int = 0,
             selection_log: Optional[Path] = None) -> FinetuneResult:
    """
    Adapta os pesos ao contexto diferenciando através do solver. A
    normalização é ajustada uma vez ao contexto e congelada. O modelo fica
    com os pesos da melhor época de validação (época 0 incluída).
    """
    config.validate()
    if not context:
        raise OdeInfValidationError("finetune sem trajetórias")
    dtype = model.dtype
    ctx = context_to_batch(context, d_max=model.config.d_max, dtype=dtype)
    norm = model.normalization(ctx)
    train_groups = build_segments(context, config.n_steps, dtype=dtype)
    val_groups = build_segments(validation, config.n_steps, dtype=dtype) if validation else train_groups
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    gen = torch.Generator().manual_seed(seed)
    noise = (config.noise_divisor, gen) if config.step_noise else None
    model.eval()

    def val_loss() -> float:
        with torch.no_grad():
            return float(segment_loss(model, ctx, norm, val_groups, config.substeps))

    initial = val_loss()
    best_loss, best_epoch = initial, 0
    best_state = copy.deepcopy(model.state_dict())
    history = [{"epoch": 0, "train_loss": None, "val_loss": initial, "best_val_loss": initial,
                "best_epoch": 0, "selected": True}]
    logger_ctx = MetricsLogger(selection_log) if selection_log else None
    try:
        if logger_ctx:
            logger_ctx.log(history[0])
        for epoch in range(1, config.epochs + 1):
            optimizer.zero_grad(set_to_none=True)
            loss = segment_loss(model, ctx, norm, train_groups, config.substeps, noise=noise)
            if not torch.isfinite(loss):
                logger.warning(f"Finetune: perda não finita na época {epoch}; paragem antecipada")
                break
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
            optimizer.step()
            current = val_loss()
            selected = bool(np.isfinite(current) and (current < best_loss or not config.select_on_validation))
            if selected:
                best_loss, best_epoch = current, epoch
                best_state = copy.deepcopy(model.state_dict())
            entry = {"epoch": epoch, "train_loss": float(loss.detach()), "val_loss": current,
                     "best_val_loss": best_loss, "best_epoch": best_epoch, "selected": selected}
            history.append(entry)
            if logger_ctx:
                logger_ctx.log(entry)
    finally:
        if logger_ctx:
            logger_ctx.close()
    model.load_state_dict(best_state)
    logger.info(f"Finetune: melhor época {best_epoch} (val {best_loss:.5g}, inicial {initial:.5g})")
    return FinetuneResult(best_epoch=best_epoch, best_val_loss=best_loss, initial_val_loss=initial,
                          history=history)
