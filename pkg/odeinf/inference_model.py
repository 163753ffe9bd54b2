"""
Operador neural que estima o campo vetorial a partir de um contexto de
trajetórias ruidosas.

Pipeline: normalização por instância (μ, σ por dimensão e escala temporal γ)
→ tuplos de transição (y, Δy, Δy², Δτ) → encoder de self-attention linear →
decoder de cross-attention sobre queries de localização → cabeças do campo e
da incerteza U. A saída em unidades originais é σ ⊙ γ · f̂.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.corruption import CorruptedTrajectory

logger = logging.getLogger(__name__)

DELTA_TAU_TARGET = 0.01
SIGMA_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# Configuração
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    encoder_layers: int = 2
    decoder_blocks: int = 4
    heads: int = 4
    mlp_layers: int = 3
    mlp_hidden: int = 256
    dropout: float = 0.1
    d_max: int = 3
    delta_tau_target: float = DELTA_TAU_TARGET
    sigma_floor: float = SIGMA_FLOOR

    def validate(self) -> None:
        if self.embed_dim % 4 != 0:
            raise OdeInfConfigError(f"model.embed_dim ({self.embed_dim}) deve ser divisível por 4")
        if self.heads < 1 or self.embed_dim % self.heads != 0:
            raise OdeInfConfigError(
                f"model.embed_dim ({self.embed_dim}) deve ser divisível por model.heads ({self.heads})")
        if self.encoder_layers < 1 or self.decoder_blocks < 1:
            raise OdeInfConfigError("model.encoder_layers e model.decoder_blocks devem ser >= 1")
        if self.mlp_layers < 2 or self.mlp_hidden < 1:
            raise OdeInfConfigError("model.mlp_layers deve ser >= 2 e model.mlp_hidden >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise OdeInfConfigError("model.dropout deve estar em [0, 1)")
        if self.d_max < 1:
            raise OdeInfConfigError("model.d_max deve ser >= 1")
        if self.delta_tau_target <= 0 or self.sigma_floor <= 0:
            raise OdeInfConfigError("model.delta_tau_target e model.sigma_floor devem ser > 0")

    def to_manifest(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_manifest(cls, data: Dict[str, Any]) -> "ModelConfig":
        return cls(**data)


MODEL_PRESETS: Dict[str, ModelConfig] = {
    "tiny": ModelConfig(embed_dim=16, encoder_layers=1, decoder_blocks=1, heads=2, mlp_hidden=32),
    "desk": ModelConfig(),
    "paper": ModelConfig(embed_dim=256, encoder_layers=2, decoder_blocks=8, heads=8, mlp_hidden=1024),
}


def model_config_for(preset: str, **overrides: Any) -> ModelConfig:
    if preset not in MODEL_PRESETS:
        raise OdeInfConfigError(f"preset desconhecido '{preset}' (disponíveis: {sorted(MODEL_PRESETS)})")
    cfg = replace(MODEL_PRESETS[preset], **overrides)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Normalização e transições (numpy)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationState:
    mu: np.ndarray
    sigma: np.ndarray
    gamma: float
    floored: Tuple[bool, ...] = ()

    def normalize_states(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.mu) / self.sigma

    def denormalize_states(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z) * self.sigma + self.mu

    def normalize_times(self, dt: np.ndarray) -> np.ndarray:
        return np.asarray(dt) * self.gamma

    def denormalize_field(self, f_norm: np.ndarray) -> np.ndarray:
        return np.asarray(f_norm) * self.sigma * self.gamma

    def normalize_field(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f) / (self.sigma * self.gamma)


def _check_context(context: Sequence[CorruptedTrajectory]) -> None:
    if not context:
        raise OdeInfValidationError("contexto vazio")
    dims = {traj.dimension for traj in context}
    if len(dims) != 1:
        raise OdeInfValidationError(f"trajetórias do contexto com dimensões diferentes: {sorted(dims)}")
    for traj in context:
        if len(traj) < 2:
            raise OdeInfValidationError("cada trajetória precisa de pelo menos 2 observações")
        if not np.all(np.diff(traj.times) > 0):
            raise OdeInfValidationError("tempos não estritamente crescentes no contexto")
        if not (np.all(np.isfinite(traj.observations)) and np.all(np.isfinite(traj.times))):
            raise OdeInfValidationError("contexto com valores não finitos")


def fit_normalization(context: Sequence[CorruptedTrajectory],
                      delta_tau_target: float = DELTA_TAU_TARGET,
                      sigma_floor: float = SIGMA_FLOOR) -> NormalizationState:
    """
    μ e σ por dimensão sobre todas as observações exceto a última de cada
    trajetória; γ = Δτ_target · exp(-média de log Δτ).
    """
    _check_context(context)
    states = np.concatenate([traj.observations[:-1] for traj in context], axis=0)
    gaps = np.concatenate([np.diff(traj.times) for traj in context])
    mu = states.mean(axis=0)
    std = states.std(axis=0)
    floored = tuple(bool(s < sigma_floor) for s in std)
    if any(floored):
        logger.debug(f"Dimensões constantes no contexto (σ limitado a {sigma_floor}): {floored}")
    sigma = np.maximum(std, sigma_floor)
    gamma = float(delta_tau_target * np.exp(-np.mean(np.log(gaps))))
    return NormalizationState(mu=mu, sigma=sigma, gamma=gamma, floored=floored)


@dataclass(frozen=True)
class TransitionFeatures:
    """J tuplos (y_i, Δy_i, Δy_i², Δτ_i) com flag de validade."""
    states: np.ndarray
    increments: np.ndarray
    squared: np.ndarray
    gaps: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


def extract_transitions(context: Sequence[CorruptedTrajectory],
                        norm: Optional[NormalizationState] = None) -> TransitionFeatures:
    """
    Um tuplo por par consecutivo de observações retidas; J = Σ(L_k - 1).
    Sem ``norm`` devolve os tuplos em unidades originais.
    """
    _check_context(context)
    states = np.concatenate([traj.observations[:-1] for traj in context], axis=0)
    inc = np.concatenate([np.diff(traj.observations, axis=0) for traj in context], axis=0)
    gaps = np.concatenate([np.diff(traj.times) for traj in context])
    if norm is not None:
        states = norm.normalize_states(states)
        inc = inc / norm.sigma
        gaps = norm.normalize_times(gaps)
    return TransitionFeatures(states, inc, inc ** 2, gaps, np.ones(gaps.shape[0], dtype=bool))


# ---------------------------------------------------------------------------
# Tensores de contexto com padding
# ---------------------------------------------------------------------------

@dataclass
class ContextBatch:
    """Transições em bruto com padding: dimensões até ``d_max`` e J até ao máximo do lote."""
    states: torch.Tensor      # (B, J, D)
    increments: torch.Tensor  # (B, J, D)
    gaps: torch.Tensor        # (B, J)
    mask: torch.Tensor        # (B, J) bool
    dim_mask: torch.Tensor    # (B, D)

    @property
    def batch_size(self) -> int:
        return self.states.shape[0]

    def to(self, dtype: torch.dtype = None, device: Union[str, torch.device] = None) -> "ContextBatch":
        def conv(t):
            return t.to(dtype=dtype or t.dtype, device=device)
        return ContextBatch(conv(self.states), conv(self.increments), conv(self.gaps),
                            self.mask.to(device=device), conv(self.dim_mask))

    def valid_counts(self) -> torch.Tensor:
        return self.mask.sum(dim=1)


def collate_transitions(transitions: Sequence[TransitionFeatures], d_max: int = 3,
                        dtype: torch.dtype = torch.float32) -> ContextBatch:
    """Junta conjuntos de transições em bruto; entradas de padding ficam a zero."""
    if not transitions:
        raise OdeInfValidationError("collate_transitions sem contextos")
    b = len(transitions)
    j_max = max(len(t) for t in transitions)
    states = np.zeros((b, j_max, d_max))
    inc = np.zeros((b, j_max, d_max))
    gaps = np.zeros((b, j_max))
    mask = np.zeros((b, j_max), dtype=bool)
    dim_mask = np.zeros((b, d_max))
    for i, t in enumerate(transitions):
        d = t.dimension
        if d > d_max:
            raise OdeInfValidationError(f"dimensão {d} > d_max {d_max}")
        n = len(t)
        states[i, :n, :d] = t.states
        inc[i, :n, :d] = t.increments
        gaps[i, :n] = t.gaps
        mask[i, :n] = t.valid
        dim_mask[i, :d] = 1.0
    if np.any(gaps[mask] <= 0):
        raise OdeInfValidationError("transição válida com Δτ <= 0")
    return ContextBatch(torch.as_tensor(states, dtype=dtype), torch.as_tensor(inc, dtype=dtype),
                        torch.as_tensor(gaps, dtype=dtype), torch.as_tensor(mask),
                        torch.as_tensor(dim_mask, dtype=dtype))


def context_to_batch(context: Sequence[CorruptedTrajectory], d_max: int = 3,
                     dtype: torch.dtype = torch.float32) -> ContextBatch:
    return collate_transitions([extract_transitions(context)], d_max=d_max, dtype=dtype)


@dataclass
class TorchNormalization:
    mu: torch.Tensor     # (B, D)
    sigma: torch.Tensor  # (B, D)
    gamma: torch.Tensor  # (B,)

    def normalize_states(self, x: torch.Tensor, dim_mask: torch.Tensor) -> torch.Tensor:
        return (x - self.mu[:, None, :]) / self.sigma[:, None, :] * dim_mask[:, None, :]

    def field_scale(self) -> torch.Tensor:
        """σ · γ com forma (B, 1, D)."""
        return (self.sigma * self.gamma[:, None])[:, None, :]

    def detach(self) -> "TorchNormalization":
        return TorchNormalization(self.mu.detach(), self.sigma.detach(), self.gamma.detach())


def fit_normalization_torch(ctx: ContextBatch, delta_tau_target: float = DELTA_TAU_TARGET,
                            sigma_floor: float = SIGMA_FLOOR) -> TorchNormalization:
    """Igual a ``fit_normalization``, em lote, sobre as transições válidas."""
    mask = ctx.mask.to(ctx.states.dtype)
    n = mask.sum(dim=1)
    if torch.any(n < 1):
        raise OdeInfValidationError("contexto sem transições válidas")
    m = mask[..., None]
    mu = (ctx.states * m).sum(dim=1) / n[:, None]
    var = (((ctx.states - mu[:, None, :]) ** 2) * m).sum(dim=1) / n[:, None]
    sigma = torch.sqrt(var).clamp_min(sigma_floor)
    active = ctx.dim_mask > 0
    mu = torch.where(active, mu, torch.zeros_like(mu))
    sigma = torch.where(active, sigma, torch.ones_like(sigma))
    safe_gaps = torch.where(ctx.mask, ctx.gaps, torch.ones_like(ctx.gaps))
    mean_log = (torch.log(safe_gaps) * mask).sum(dim=1) / n
    gamma = delta_tau_target * torch.exp(-mean_log)
    return TorchNormalization(mu, sigma, gamma).detach()


# ---------------------------------------------------------------------------
# Blocos do modelo
# ---------------------------------------------------------------------------

def kernel_feature_map(x: torch.Tensor) -> torch.Tensor:
    return F.elu(x) + 1.0


class LinearSelfAttention(nn.Module):
    """Self-attention kernelizada (ELU+1) com máscara sobre posições válidas."""

    def __init__(self, dim: int, heads: int, eps: float = 1e-6):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.eps = eps
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, j, _ = x.shape
        q, k, v = self.qkv(x).view(b, j, 3, self.heads, self.head_dim).unbind(dim=2)
        m = mask.to(x.dtype)[:, :, None, None]
        q_prime = kernel_feature_map(q)
        k_prime = kernel_feature_map(k) * m
        v = v * m
        kv = torch.einsum("bjhd,bjhe->bhde", k_prime, v)
        z = torch.einsum("bjhd,bhd->bjh", q_prime, k_prime.sum(dim=1))
        out = torch.einsum("bjhd,bhde->bjhe", q_prime, kv) / (z[..., None] + self.eps)
        return self.out(out.reshape(b, j, -1))


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, hidden: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = LinearSelfAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout), nn.Linear(hidden, dim))
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.drop(self.attn(self.norm1(x), mask))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderBlock(nn.Module):
    """ψ_i: cross-attention softmax (queries → contexto) com pre-LN e FFN."""

    def __init__(self, dim: int, heads: int, hidden: int, dropout: float):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.norm_kv = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout), nn.Linear(hidden, dim))
        self.drop = nn.Dropout(dropout)

    def forward(self, h: torch.Tensor, c: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        kv = self.norm_kv(c)
        attn, _ = self.attn(self.norm_q(h), kv, kv, key_padding_mask=~mask, need_weights=False)
        h = h + self.drop(attn)
        return h + self.drop(self.ff(self.norm2(h)))


def mlp(in_dim: int, hidden: int, out_dim: int, layers: int, dropout: float) -> nn.Sequential:
    mods: List[nn.Module] = [nn.Linear(in_dim, hidden), nn.GELU(), nn.Dropout(dropout)]
    for _ in range(layers - 2):
        mods += [nn.Linear(hidden, hidden), nn.GELU(), nn.Dropout(dropout)]
    mods.append(nn.Linear(hidden, out_dim))
    return nn.Sequential(*mods)


class VectorFieldModel(nn.Module):
    """
    Estimador amortizado do campo vetorial.

    ``forward`` devolve (campo normalizado, U) nas queries; ``predict_field``
    devolve o campo em unidades originais.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        n, d = config.embed_dim, config.d_max
        width = n // 4
        self.proj_y = nn.Linear(d, width)
        self.proj_dy = nn.Linear(d, width)
        self.proj_dy2 = nn.Linear(d, width)
        self.proj_dt = nn.Linear(1, width)
        self.encoder = nn.ModuleList(
            [EncoderLayer(n, config.heads, 2 * n, config.dropout) for _ in range(config.encoder_layers)])
        self.encoder_norm = nn.LayerNorm(n)
        self.proj_x = nn.Sequential(nn.Linear(d, n), nn.GELU(), nn.Linear(n, n))
        self.decoder = nn.ModuleList(
            [DecoderBlock(n, config.heads, 2 * n, config.dropout) for _ in range(config.decoder_blocks)])
        self.decoder_norm = nn.LayerNorm(n)
        self.field_head = mlp(n, config.mlp_hidden, d, config.mlp_layers, config.dropout)
        self.uncertainty_head = mlp(n, config.mlp_hidden, 1, config.mlp_layers, config.dropout)

    def normalization(self, ctx: ContextBatch) -> TorchNormalization:
        return fit_normalization_torch(ctx, self.config.delta_tau_target, self.config.sigma_floor)

    def embed_transitions(self, ctx: ContextBatch, norm: TorchNormalization) -> torch.Tensor:
        dm = ctx.dim_mask[:, None, :]
        m = ctx.mask.to(ctx.states.dtype)[..., None]
        y = norm.normalize_states(ctx.states, ctx.dim_mask)
        dy = ctx.increments / norm.sigma[:, None, :] * dm
        dt = (ctx.gaps * norm.gamma[:, None])[..., None]
        d = torch.cat([self.proj_y(y), self.proj_dy(dy), self.proj_dy2(dy ** 2), self.proj_dt(dt)], dim=-1)
        return d * m

    def encode_context(self, ctx: ContextBatch, norm: Optional[TorchNormalization] = None) -> torch.Tensor:
        """Matriz de contexto C com forma (B, J, n); a ordem segue a das transições."""
        if not torch.all(ctx.mask.any(dim=1)):
            raise OdeInfValidationError("contexto sem transições válidas")
        if norm is None:
            norm = self.normalization(ctx)
        h = self.embed_transitions(ctx, norm)
        for layer in self.encoder:
            h = layer(h, ctx.mask)
        return self.encoder_norm(h)

    def decode_query(self, x_norm: torch.Tensor, c: torch.Tensor, mask: torch.Tensor,
                     dim_mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """
        Args:
            x_norm: queries normalizadas (B, Q, D), zero nas dimensões de padding

        Returns:
            (campo normalizado (B, Q, D), U (B, Q))
        """
        if not torch.all(torch.isfinite(x_norm)):
            raise OdeInfValidationError("query com valores não finitos")
        h = self.proj_x(x_norm * dim_mask[:, None, :])
        for block in self.decoder:
            h = block(h, c, mask)
        h = self.decoder_norm(h)
        field = self.field_head(h) * dim_mask[:, None, :]
        u = self.uncertainty_head(h).squeeze(-1)
        return field, u

    def forward(self, ctx: ContextBatch, queries: torch.Tensor,
                norm: Optional[TorchNormalization] = None) -> Tuple[torch.Tensor, torch.Tensor, TorchNormalization]:
        """Queries em unidades originais; devolve (campo normalizado, U, normalização)."""
        if norm is None:
            norm = self.normalization(ctx)
        c = self.encode_context(ctx, norm)
        x_norm = norm.normalize_states(queries, ctx.dim_mask)
        field, u = self.decode_query(x_norm, c, ctx.mask, ctx.dim_mask)
        return field, u, norm

    def predict_field(self, ctx: ContextBatch, queries: torch.Tensor,
                      norm: Optional[TorchNormalization] = None) -> torch.Tensor:
        """Campo em unidades originais: σ ⊙ γ · f̂(IN(x))."""
        field, _u, norm = self.forward(ctx, queries, norm)
        return field * norm.field_scale()

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(config: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> VectorFieldModel:
    """Inicialização determinística dada a seed."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = VectorFieldModel(config)
    return model.to(dtype)


class VectorFieldEstimator:
    """
    Campo inferido a partir de um contexto fixo, como callable numpy
    ``(..., d) -> (..., d)`` em unidades originais. O contexto é codificado
    uma vez e reutilizado.
    """

    def __init__(self, model: VectorFieldModel, context: Sequence[CorruptedTrajectory],
                 batch_size: int = 4096):
        _check_context(context)
        self.model = model
        self.dimension = context[0].dimension
        self.batch_size = batch_size
        self.context = list(context)
        self._ctx = context_to_batch(self.context, d_max=model.config.d_max, dtype=model.dtype)
        with self._eval_mode(), torch.no_grad():
            self._norm = model.normalization(self._ctx)
            self._c = model.encode_context(self._ctx, self._norm)

    class _EvalGuard:
        def __init__(self, model: nn.Module):
            self.model = model
            self.was_training = model.training

        def __enter__(self):
            self.model.eval()
            return self

        def __exit__(self, *exc):
            self.model.train(self.was_training)
            return False

    def _eval_mode(self) -> "_EvalGuard":
        return VectorFieldEstimator._EvalGuard(self.model)

    @property
    def normalization(self) -> NormalizationState:
        d = self.dimension
        return NormalizationState(mu=self._norm.mu[0, :d].double().numpy(),
                                  sigma=self._norm.sigma[0, :d].double().numpy(),
                                  gamma=float(self._norm.gamma[0]))

    def _evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.dimension,):
            raise OdeInfValidationError(f"query com forma {x.shape}, dimensão esperada {self.dimension}")
        if not np.all(np.isfinite(x)):
            raise OdeInfValidationError("query com valores não finitos")
        lead = x.shape[:-1]
        flat = x.reshape(-1, self.dimension)
        d_max = self.model.config.d_max
        fields, us = [], []
        with self._eval_mode(), torch.no_grad():
            for start in range(0, flat.shape[0], self.batch_size):
                chunk = np.zeros((1, min(self.batch_size, flat.shape[0] - start), d_max))
                chunk[0, :, :self.dimension] = flat[start:start + self.batch_size]
                q = torch.as_tensor(chunk, dtype=self.model.dtype)
                xn = self._norm.normalize_states(q, self._ctx.dim_mask)
                f, u = self.model.decode_query(xn, self._c, self._ctx.mask, self._ctx.dim_mask)
                f = f * self._norm.field_scale()
                fields.append(f[0, :, :self.dimension].double().numpy())
                us.append(u[0].double().numpy())
        f_all = np.concatenate(fields, axis=0) if fields else np.zeros((0, self.dimension))
        u_all = np.concatenate(us, axis=0) if us else np.zeros((0,))
        return f_all.reshape(lead + (self.dimension,)), u_all.reshape(lead)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._evaluate(x)[0]

    def log_variance(self, x: np.ndarray) -> np.ndarray:
        return self._evaluate(x)[1]


def count_parameters_by_role(model: VectorFieldModel) -> Dict[str, int]:
    roles = {"projections": ["proj_y", "proj_dy", "proj_dy2", "proj_dt", "proj_x"],
             "encoder": ["encoder", "encoder_norm"], "decoder": ["decoder", "decoder_norm"],
             "field_head": ["field_head"], "uncertainty_head": ["uncertainty_head"]}
    out = {}
    for role, prefixes in roles.items():
        out[role] = sum(p.numel() for name, p in model.named_parameters()
                        if any(name.split(".")[0] == pre for pre in prefixes))
    return out