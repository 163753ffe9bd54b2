"""
Modelo de observação do pré-treino: ruído gaussiano multiplicativo e
subamostragem de Bernoulli.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.simulation import Trajectory, TrajectorySet

MIN_RETAINED = 2


@dataclass(frozen=True)
class CorruptionConfig:
    sigma: float = 0.0
    rho: float = 0.0

    def validate(self) -> None:
        if self.sigma < 0:
            raise OdeInfConfigError(f"sigma deve ser >= 0 (recebido {self.sigma})")
        if not 0.0 <= self.rho < 1.0:
            raise OdeInfConfigError(f"rho deve estar em [0, 1) (recebido {self.rho})")


@dataclass(frozen=True)
class CorruptionRanges:
    """Intervalos de onde σ e ρ são amostrados, um par por sistema."""
    sigma_range: Tuple[float, float] = (0.0, 0.06)
    rho_range: Tuple[float, float] = (0.0, 0.5)

    def validate(self) -> None:
        lo, hi = self.sigma_range
        if lo < 0 or hi < lo:
            raise OdeInfConfigError(f"corruption.sigma_range inválido: {self.sigma_range}")
        lo, hi = self.rho_range
        if lo < 0 or hi < lo or hi >= 1:
            raise OdeInfConfigError(f"corruption.rho_range inválido: {self.rho_range}")

    def sample(self, rng: np.random.Generator) -> CorruptionConfig:
        sigma = float(rng.uniform(*self.sigma_range))
        rho = float(rng.uniform(*self.rho_range))
        return CorruptionConfig(sigma=sigma, rho=rho)


@dataclass(frozen=True)
class CorruptedTrajectory:
    """Observações retidas (tempos e estados ruidosos) e a máscara sobre a grelha original."""
    times: np.ndarray
    observations: np.ndarray
    keep_mask: np.ndarray

    def __post_init__(self):
        if self.times.shape[0] != self.observations.shape[0]:
            raise OdeInfValidationError("tempos e observações com comprimentos diferentes")
        if int(self.keep_mask.sum()) != self.times.shape[0]:
            raise OdeInfValidationError("keep_mask não corresponde ao número de observações retidas")
        if self.times.shape[0] < MIN_RETAINED:
            raise OdeInfValidationError(f"são precisas pelo menos {MIN_RETAINED} observações")
        if not np.all(np.diff(self.times) > 0):
            raise OdeInfValidationError("tempos duplicados ou não crescentes na trajetória")

    @property
    def dimension(self) -> int:
        return self.observations.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]

    @classmethod
    def from_observations(cls, times: np.ndarray, observations: np.ndarray) -> "CorruptedTrajectory":
        """Contexto sem grelha original conhecida (dados feitos à mão, benchmarks)."""
        times = np.asarray(times, dtype=np.float64)
        obs = np.asarray(observations, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[:, None]
        return cls(times, obs, np.ones(times.shape[0], dtype=bool))

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "CorruptedTrajectory":
        return cls.from_observations(traj.times, traj.states)


def apply_noise(states: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """y = (1 + ε) x com ε ~ N(0, σ²) independente por entrada. Preserva zeros."""
    if sigma < 0:
        raise OdeInfValidationError("sigma deve ser >= 0")
    states = np.asarray(states, dtype=np.float64)
    eps = rng.normal(0.0, sigma, size=states.shape)
    return (1.0 + eps) * states


def subsample(length: int, rho: float, rng: np.random.Generator) -> np.ndarray:
    """
    Máscara de retenção: cada observação é removida com probabilidade ρ.
    Se sobrarem menos de 2, a primeira e a última são forçadas.
    """
    if length < MIN_RETAINED:
        raise OdeInfValidationError(f"comprimento {length} < {MIN_RETAINED}")
    if not 0.0 <= rho < 1.0:
        raise OdeInfValidationError(f"rho deve estar em [0, 1) (recebido {rho})")
    mask = rng.random(length) >= rho
    if mask.sum() < MIN_RETAINED:
        mask[0] = True
        mask[-1] = True
    return mask


def corrupt_system(trajs: TrajectorySet, config: CorruptionConfig,
                   rng: np.random.Generator) -> List[CorruptedTrajectory]:
    """
    Um único σ para as K trajetórias; máscaras independentes por trajetória.
    O ruído é aplicado antes da subamostragem.
    """
    config.validate()
    noisy = apply_noise(trajs.states, config.sigma, rng)
    out = []
    for k in range(trajs.n_trajectories):
        mask = subsample(trajs.times.shape[0], config.rho, rng)
        out.append(CorruptedTrajectory(trajs.times[mask], noisy[k][mask], mask))
    return out
