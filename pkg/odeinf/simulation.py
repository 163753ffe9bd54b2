"""
Integração de problemas de valor inicial, filtragem de divergências,
caixas envolventes e amostras-alvo do campo vetorial.

Todas as funções são puras dado um ``np.random.Generator`` explícito.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.ode_prior import PolynomialVectorField, evaluate_field

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray], np.ndarray]

DEGENERATE_PAD = 0.1


@dataclass(frozen=True)
class TimeGrid:
    """
    Grelha de observação equidistante.

    Por omissão 200 pontos com Δt = 0.05, ou seja a janela [0, 9.95].
    """
    t_start: float = 0.0
    t_end: float = 9.95
    n_points: int = 200
    substeps: int = 20

    def validate(self) -> None:
        if not self.t_end > self.t_start:
            raise OdeInfConfigError(f"grid: t_end ({self.t_end}) deve ser > t_start ({self.t_start})")
        if self.n_points < 2:
            raise OdeInfConfigError(f"grid: n_points deve ser >= 2 (recebido {self.n_points})")
        if self.substeps < 1:
            raise OdeInfConfigError(f"grid: substeps deve ser >= 1 (recebido {self.substeps})")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def substep(self) -> float:
        return self.dt / self.substeps

    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_points, dtype=np.float64)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] != self.times.shape[0]:
            raise OdeInfValidationError(
                f"trajetória com {self.times.shape[0]} tempos e estados {self.states.shape}")
        if self.times.shape[0] > 1 and not np.all(np.diff(self.times) > 0):
            raise OdeInfValidationError("tempos da trajetória não são estritamente crescentes")

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class TrajectorySet:
    """K trajetórias na mesma grelha: ``states`` tem forma (K, n, d)."""
    times: np.ndarray
    states: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    @property
    def dimension(self) -> int:
        return self.states.shape[2]

    def __iter__(self) -> Iterator[Trajectory]:
        for k in range(self.n_trajectories):
            yield Trajectory(self.times, self.states[k])

    def __getitem__(self, k: int) -> Trajectory:
        return Trajectory(self.times, self.states[k])


@dataclass(frozen=True)
class Divergence:
    """Sinal de divergência: primeiro passo de Euler com valor inválido."""
    first_bad_index: int  # índice do ponto de observação cujo intervalo divergiu
    step_index: int       # índice global do passo intermédio
    trajectory: int
    reason: str           # "non_finite" | "bound"


@dataclass(frozen=True)
class Rejection:
    """Sistema rejeitado pela filtragem de divergência (resultado normal, não exceção)."""
    reason: str
    divergence: Optional[Divergence] = None


@dataclass(frozen=True)
class BoundingBox:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        if np.any(self.low > self.high):
            raise OdeInfValidationError(f"caixa inválida: low={self.low} high={self.high}")

    @property
    def dimension(self) -> int:
        return self.low.shape[0]

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        return np.all((x >= self.low) & (x <= self.high), axis=-1)

    def to_manifest(self) -> dict:
        return {"low": [float(v) for v in self.low], "high": [float(v) for v in self.high]}

    @classmethod
    def from_manifest(cls, data: dict) -> "BoundingBox":
        return cls(np.asarray(data["low"], dtype=np.float64), np.asarray(data["high"], dtype=np.float64))


@dataclass(frozen=True)
class VectorFieldSample:
    location: np.ndarray
    value: np.ndarray


@dataclass(frozen=True)
class VectorFieldSamples:
    """n amostras do campo: ``locations`` e ``values`` com forma (n, d)."""
    locations: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.locations.shape[0]

    def __getitem__(self, i: int) -> VectorFieldSample:
        return VectorFieldSample(self.locations[i], self.values[i])


def _as_field_fn(field: Union[PolynomialVectorField, FieldFn]) -> FieldFn:
    if isinstance(field, PolynomialVectorField):
        return lambda x: evaluate_field(field, x)
    return field


def euler_rollout(field: Union[PolynomialVectorField, FieldFn], x0: np.ndarray,
                  intervals: np.ndarray, substeps: int,
                  bound: Optional[float] = None) -> Union[np.ndarray, Divergence]:
    """
    Euler de passo fixo em lote.

    Args:
        x0: estados iniciais (K, d)
        intervals: comprimento de cada intervalo entre observações (n - 1,)
        substeps: passos de Euler iguais por intervalo
        bound: magnitude máxima por coordenada, verificada em cada passo intermédio

    Returns:
        estados (K, n, d) ou ``Divergence``
    """
    fn = _as_field_fn(field)
    x = np.array(x0, dtype=np.float64)
    if x.ndim != 2:
        raise OdeInfValidationError(f"x0 deve ter forma (K, d), recebido {x.shape}")
    if not np.all(np.isfinite(x)):
        raise OdeInfValidationError("estado inicial não finito")
    n = intervals.shape[0] + 1
    out = np.empty((x.shape[0], n, x.shape[1]), dtype=np.float64)
    out[:, 0] = x
    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n - 1):
            h = intervals[i] / substeps
            for _ in range(substeps):
                x = x + h * fn(x)
                bad = ~np.isfinite(x)
                if bound is not None:
                    bad |= np.abs(x) > bound
                if bad.any():
                    rows = np.nonzero(bad.any(axis=1))[0]
                    reason = "non_finite" if (~np.isfinite(x[rows[0]])).any() else "bound"
                    return Divergence(first_bad_index=i + 1, step_index=step,
                                      trajectory=int(rows[0]), reason=reason)
                step += 1
            out[:, i + 1] = x
    return out


def integrate_euler(field: Union[PolynomialVectorField, FieldFn], x0: np.ndarray,
                    grid: TimeGrid, bound: Optional[float] = None) -> Union[Trajectory, Divergence]:
    """Integra um único estado inicial na grelha com ``grid.substeps`` passos por intervalo."""
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    states = integrate_euler_batch(field, x0, grid, bound=bound)
    if isinstance(states, Divergence):
        return states
    return Trajectory(grid.times(), states[0])


def integrate_euler_batch(field: Union[PolynomialVectorField, FieldFn], x0: np.ndarray,
                          grid: TimeGrid, bound: Optional[float] = None) -> Union[np.ndarray, Divergence]:
    grid.validate()
    intervals = np.full(grid.n_points - 1, grid.dt, dtype=np.float64)
    return euler_rollout(field, x0, intervals, grid.substeps, bound=bound)


def integrate_on_times(field: Union[PolynomialVectorField, FieldFn], x0: np.ndarray,
                       times: np.ndarray, substeps: int,
                       bound: Optional[float] = None) -> Union[np.ndarray, Divergence]:
    """Como ``euler_rollout`` mas com instantes arbitrários (estritamente crescentes)."""
    times = np.asarray(times, dtype=np.float64)
    intervals = np.diff(times)
    if np.any(intervals <= 0):
        raise OdeInfValidationError("instantes de integração não estritamente crescentes")
    return euler_rollout(field, np.atleast_2d(x0), intervals, substeps, bound=bound)


def simulate_system(vf: PolynomialVectorField, n_trajectories: int, grid: TimeGrid,
                    reject_threshold: float, rng: np.random.Generator,
                    initial_conditions: Optional[np.ndarray] = None) -> Union[TrajectorySet, Rejection]:
    """
    Integra K trajetórias a partir de condições iniciais N(0, I).

    O sistema inteiro é rejeitado se alguma coordenada de alguma trajetória
    exceder ``reject_threshold`` em valor absoluto ou deixar de ser finita.
    """
    if n_trajectories < 1:
        raise OdeInfValidationError("n_trajectories deve ser >= 1")
    if initial_conditions is None:
        x0 = rng.standard_normal((n_trajectories, vf.dimension))
    else:
        x0 = np.asarray(initial_conditions, dtype=np.float64).reshape(n_trajectories, vf.dimension)
    if np.any(np.abs(x0) > reject_threshold):
        return Rejection(reason="initial_condition")
    states = integrate_euler_batch(vf, x0, grid, bound=reject_threshold)
    if isinstance(states, Divergence):
        return Rejection(reason=states.reason, divergence=states)
    return TrajectorySet(grid.times(), states)


def bounding_box(trajectories: Union[TrajectorySet, Sequence[np.ndarray], np.ndarray],
                 expand: float) -> BoundingBox:
    """
    Caixa por dimensão [min - e*range, max + e*range]; dimensões degeneradas
    (range = 0) recebem uma margem fixa de 0.1.
    """
    if isinstance(trajectories, TrajectorySet):
        points = trajectories.states.reshape(-1, trajectories.dimension)
    elif isinstance(trajectories, np.ndarray):
        points = trajectories.reshape(-1, trajectories.shape[-1])
    else:
        arrays = [np.asarray(t) for t in trajectories]
        if not arrays:
            raise OdeInfValidationError("bounding_box sem trajetórias")
        points = np.concatenate([a.reshape(-1, a.shape[-1]) for a in arrays], axis=0)
    if points.size == 0:
        raise OdeInfValidationError("bounding_box sem estados")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, expand * span, DEGENERATE_PAD)
    return BoundingBox(lo - pad, hi + pad)


def sample_vf_targets(vf: PolynomialVectorField, box: BoundingBox, n: int,
                      rng: np.random.Generator) -> VectorFieldSamples:
    """n localizações uniformes na caixa, com os valores exatos do campo."""
    if n < 1:
        raise OdeInfValidationError("n deve ser >= 1")
    locations = rng.uniform(box.low, box.high, size=(n, box.dimension))
    return VectorFieldSamples(locations, evaluate_field(vf, locations))


def solve_reference(field: Union[PolynomialVectorField, FieldFn], x0: np.ndarray,
                    times: np.ndarray, rtol: float = 1e-10, atol: float = 1e-12) -> Union[np.ndarray, Divergence]:
    """Solução de referência de alta precisão (DOP853) nos instantes pedidos."""
    fn = _as_field_fn(field)
    times = np.asarray(times, dtype=np.float64)
    sol = solve_ivp(lambda _t, x: fn(x[None, :])[0], (times[0], times[-1]),
                    np.asarray(x0, dtype=np.float64), t_eval=times,
                    method="DOP853", rtol=rtol, atol=atol)
    if not sol.success or sol.y.shape[1] != times.shape[0] or not np.all(np.isfinite(sol.y)):
        logger.warning(f"Solução de referência falhou: {sol.message}")
        return Divergence(first_bad_index=int(sol.y.shape[1]), step_index=-1, trajectory=0,
                          reason="non_finite")
    return sol.y.T.copy()
