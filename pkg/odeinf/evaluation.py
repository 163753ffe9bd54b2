"""
Protocolo de avaliação: tarefas de reconstrução e generalização pontuadas
por R² ponderado pela variância, métricas do campo (RMSE e cosseno), taxas
de sucesso e o conjunto de benchmarks Van der Pol / FitzHugh-Nagumo.

A inferência entra como callable ``infer(context) -> campo``, de modo que o
mesmo código avalia o modelo, o campo verdadeiro (oráculo) ou um campo nulo.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.corruption import CorruptedTrajectory, CorruptionConfig, apply_noise, subsample
from odeinf.dataset_store import SystemRecord
from odeinf.demo_systems import DemoSystem, fitzhugh_nagumo, van_der_pol
from odeinf.ode_prior import evaluate_field
from odeinf.simulation import Divergence, integrate_on_times, solve_reference

logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray], np.ndarray]
InferFn = Callable[[Sequence[CorruptedTrajectory]], FieldFn]

TASK_RECONSTRUCTION = "reconstruction"
TASK_GENERALIZATION = "generalization"
TASK_FORECAST = "forecast"
TASK_IMPUTATION = "imputation"

COSINE_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class EvalConfig:
    n_points: int = 512
    substeps: int = 20
    divergence_bound: float = 1e4
    thresholds: Tuple[float, ...] = (0.9, 0.8)
    sigmas: Tuple[float, ...] = (0.0, 0.01, 0.05)
    rhos: Tuple[float, ...] = (0.0, 0.2, 0.5)
    systems: Tuple[str, ...] = ()
    systems_file: Optional[str] = None
    n_records: int = 100
    workers: int = 1

    def validate(self) -> None:
        if self.n_points < 2 or self.substeps < 1:
            raise OdeInfConfigError("eval.n_points deve ser >= 2 e eval.substeps >= 1")
        if self.divergence_bound <= 0:
            raise OdeInfConfigError("eval.divergence_bound deve ser > 0")
        if not self.thresholds or any(not 0 < t <= 1 for t in self.thresholds):
            raise OdeInfConfigError(f"eval.thresholds inválidos: {self.thresholds}")
        for s in self.sigmas:
            if s < 0:
                raise OdeInfConfigError("eval.sigmas devem ser >= 0")
        for r in self.rhos:
            if not 0 <= r < 1:
                raise OdeInfConfigError("eval.rhos devem estar em [0, 1)")


@dataclass(frozen=True)
class EvalTask:
    kind: str
    sigma: float = 0.0
    rho: float = 0.0
    n_points: int = 512
    substeps: int = 20
    seed: int = 0
    initial_conditions: Tuple[Tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in (TASK_RECONSTRUCTION, TASK_GENERALIZATION, TASK_FORECAST, TASK_IMPUTATION):
            raise OdeInfValidationError(f"tarefa desconhecida: {self.kind}")
        if self.n_points < 2:
            raise OdeInfValidationError("n_points deve ser >= 2")
        for ic in self.initial_conditions:
            if not np.all(np.isfinite(ic)):
                raise OdeInfValidationError("condição inicial não finita")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Métricas
# ---------------------------------------------------------------------------

@dataclass
class R2Result:
    per_dimension: np.ndarray
    weighted: float
    constant_dimensions: Tuple[int, ...] = ()

    @property
    def defined(self) -> bool:
        return bool(np.isfinite(self.weighted))


def r2_score(predicted: np.ndarray, true: np.ndarray) -> R2Result:
    """
    R² por dimensão (1 - SSE/SST) e média ponderada pela variância de cada
    dimensão. Dimensões constantes ficam de fora (pesos renormalizados).
    """
    pred = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(true, dtype=np.float64)
    if pred.ndim == 1:
        pred = pred[:, None]
    if truth.ndim == 1:
        truth = truth[:, None]
    if pred.shape != truth.shape:
        raise OdeInfValidationError(f"séries com formas diferentes: {pred.shape} vs {truth.shape}")
    if truth.shape[0] < 2:
        raise OdeInfValidationError("r2_score precisa de pelo menos 2 pontos")
    centered = truth - truth.mean(axis=0)
    sst = np.sum(centered ** 2, axis=0)
    sse = np.sum((pred - truth) ** 2, axis=0)
    constant = sst <= 0.0
    per_dim = np.full(truth.shape[1], np.nan)
    per_dim[~constant] = 1.0 - sse[~constant] / sst[~constant]
    if constant.all():
        weighted = float("nan")
    else:
        weights = sst[~constant] / sst[~constant].sum()
        weighted = float(np.sum(weights * per_dim[~constant]))
    return R2Result(per_dim, weighted, tuple(int(i) for i in np.nonzero(constant)[0]))


@dataclass
class VFMetrics:
    rmse: float
    cosine: float
    n_samples: int
    n_excluded: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def vf_metrics(predicted: np.ndarray, true: np.ndarray) -> VFMetrics:
    """RMSE elemento a elemento e cosseno médio (pares com norma < 1e-12 excluídos e contados)."""
    pred = np.asarray(predicted, dtype=np.float64)
    truth = np.asarray(true, dtype=np.float64)
    if pred.shape != truth.shape:
        raise OdeInfValidationError(f"formas diferentes: {pred.shape} vs {truth.shape}")
    rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
    n_pred = np.linalg.norm(pred, axis=-1)
    n_true = np.linalg.norm(truth, axis=-1)
    keep = (n_pred >= COSINE_NORM_FLOOR) & (n_true >= COSINE_NORM_FLOOR)
    if keep.any():
        cos = np.sum(pred[keep] * truth[keep], axis=-1) / (n_pred[keep] * n_true[keep])
        cosine = float(np.mean(cos))
    else:
        cosine = float("nan")
    return VFMetrics(rmse=rmse, cosine=cosine, n_samples=int(keep.size), n_excluded=int((~keep).sum()))


def vf_metrics_for_record(field_fn: FieldFn, record: SystemRecord) -> VFMetrics:
    return vf_metrics(field_fn(record.vf_targets.locations), record.vf_targets.values)


def add_gaussian_noise(states: np.ndarray, variance: float, rng: np.random.Generator) -> np.ndarray:
    """Ruído aditivo y = x + N(0, variance), independente da escala do estado."""
    if variance < 0:
        raise OdeInfValidationError("variância deve ser >= 0")
    states = np.asarray(states, dtype=np.float64)
    return states + rng.normal(0.0, np.sqrt(variance), size=states.shape)


# ---------------------------------------------------------------------------
# Tarefas de reconstrução e generalização
# ---------------------------------------------------------------------------

@dataclass
class TaskScore:
    system: str
    kind: str
    sigma: float
    rho: float
    seed: int
    r2: Optional[float]
    per_dimension: List[Optional[float]] = field(default_factory=list)
    failure: Optional[str] = None
    chaotic: bool = False
    n_context: int = 0

    @property
    def failed(self) -> bool:
        return self.failure is not None or self.r2 is None or not np.isfinite(self.r2)

    def succeeded(self, threshold: float) -> bool:
        return not self.failed and self.r2 > threshold

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class EvalSystem:
    """Sistema a avaliar: campo verdadeiro, condição inicial e janela temporal."""
    name: str
    field: FieldFn
    x0: np.ndarray
    t_span: Tuple[float, float]
    heldout_ics: Tuple[Tuple[float, ...], ...] = ()
    chaotic: bool = False
    reference_times: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None

    @property
    def dimension(self) -> int:
        return int(np.asarray(self.x0).shape[-1])

    @classmethod
    def from_demo(cls, system: DemoSystem) -> "EvalSystem":
        return cls(system.name, system.field, system.initial_condition, system.t_span,
                   system.heldout_ics, system.chaotic)

    def times(self, n_points: int) -> np.ndarray:
        if self.reference_times is not None:
            return self.reference_times
        return np.linspace(self.t_span[0], self.t_span[1], n_points)

    def reference_solution(self, x0: np.ndarray, times: np.ndarray) -> Union[np.ndarray, Divergence]:
        if self.reference is not None and np.array_equal(np.asarray(x0), np.asarray(self.x0)):
            return self.reference
        return solve_reference(self.field, x0, times)


def _score(system: EvalSystem, task: EvalTask, r2: Optional[R2Result], failure: Optional[str],
           n_context: int) -> TaskScore:
    if r2 is not None and not r2.defined and failure is None:
        failure = "constant_reference"
    return TaskScore(system=system.name, kind=task.kind, sigma=task.sigma, rho=task.rho, seed=task.seed,
                     r2=None if r2 is None or not r2.defined else r2.weighted,
                     per_dimension=[] if r2 is None else [None if not np.isfinite(v) else float(v)
                                                          for v in r2.per_dimension],
                     failure=failure, chaotic=system.chaotic, n_context=n_context)


def build_context(system: EvalSystem, task: EvalTask, times: np.ndarray,
                  reference: np.ndarray) -> List[CorruptedTrajectory]:
    """Contexto corrompido (ruído multiplicativo e subamostragem) na grelha de avaliação."""
    rng = np.random.default_rng(np.random.SeedSequence(task.seed, spawn_key=(0,)))
    cfg = CorruptionConfig(sigma=task.sigma, rho=task.rho)
    cfg.validate()
    noisy = apply_noise(reference, cfg.sigma, rng)
    mask = subsample(times.shape[0], cfg.rho, rng)
    return [CorruptedTrajectory(times[mask], noisy[mask], mask)]


def _rollout_score(field_fn: FieldFn, x0: np.ndarray, times: np.ndarray, reference: np.ndarray,
                   task: EvalTask, bound: float) -> Tuple[Optional[R2Result], Optional[str]]:
    try:
        states = integrate_on_times(field_fn, x0, times, task.substeps, bound=bound)
    except (FloatingPointError, OdeInfValidationError) as e:
        return None, f"integration_error: {e}"
    if isinstance(states, Divergence):
        return None, f"divergence_{states.reason}"
    return r2_score(states[0], reference), None


def run_reconstruction(infer: InferFn, system: EvalSystem, task: EvalTask,
                       bound: float = 1e4) -> TaskScore:
    """Infere o campo do contexto e integra a partir da condição inicial verdadeira."""
    times = system.times(task.n_points)
    reference = system.reference_solution(system.x0, times)
    if isinstance(reference, Divergence):
        return _score(system, task, None, "reference_failed", 0)
    context = build_context(system, task, times, reference)
    field_fn = infer(context)
    r2, failure = _rollout_score(field_fn, np.asarray(system.x0), times, reference, task, bound)
    return _score(system, task, r2, failure, len(context[0]))


def run_generalization(infer: InferFn, system: EvalSystem, task: EvalTask,
                       bound: float = 1e4) -> TaskScore:
    """
    Como a reconstrução, mas integra a partir de condições iniciais fora do
    contexto; a pontuação é a média dos R² e qualquer falha conta como falha.
    """
    ics = task.initial_conditions or system.heldout_ics
    if not ics:
        raise OdeInfValidationError(f"{system.name}: sem condições iniciais para generalização")
    times = system.times(task.n_points)
    reference = system.reference_solution(system.x0, times)
    if isinstance(reference, Divergence):
        return _score(system, task, None, "reference_failed", 0)
    context = build_context(system, task, times, reference)
    field_fn = infer(context)
    scores = []
    per_dims = []
    for ic in ics:
        ic = np.asarray(ic, dtype=np.float64)
        ref_ic = solve_reference(system.field, ic, times)
        if isinstance(ref_ic, Divergence):
            return _score(system, task, None, "reference_failed", len(context[0]))
        r2, failure = _rollout_score(field_fn, ic, times, ref_ic, task, bound)
        if failure is not None:
            return _score(system, task, None, failure, len(context[0]))
        if not r2.defined:
            return _score(system, task, r2, None, len(context[0]))
        scores.append(r2.weighted)
        per_dims.append(r2.per_dimension)
    mean = R2Result(np.nanmean(np.stack(per_dims), axis=0), float(np.mean(scores)))
    return _score(system, task, mean, None, len(context[0]))


# ---------------------------------------------------------------------------
# Relatório
# ---------------------------------------------------------------------------

def success_rate(scores: Sequence[TaskScore], threshold: float) -> float:
    """Fração de sistemas com R² > threshold; falhas contam como insucesso."""
    if not scores:
        return float("nan")
    return sum(s.succeeded(threshold) for s in scores) / len(scores)


@dataclass
class EvaluationReport:
    scores: List[TaskScore] = field(default_factory=list)
    vf: Dict[str, VFMetrics] = field(default_factory=dict)
    thresholds: Tuple[float, ...] = (0.9, 0.8)
    metadata: Dict[str, Any] = field(default_factory=dict)
    plot_data: List[Dict[str, Any]] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.scores and not self.vf

    def filter(self, kind: Optional[str] = None, sigma: Optional[float] = None,
               rho: Optional[float] = None) -> List[TaskScore]:
        return [s for s in self.scores
                if (kind is None or s.kind == kind) and (sigma is None or s.sigma == sigma)
                and (rho is None or s.rho == rho)]

    def success_rates(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """{kind: {"rho=..,sigma=..": {"0.9": taxa, ...}}}"""
        out: Dict[str, Dict[str, Dict[str, float]]] = {}
        for kind in sorted({s.kind for s in self.scores}):
            cells: Dict[str, Dict[str, float]] = {}
            for rho in sorted({s.rho for s in self.scores if s.kind == kind}):
                for sigma in sorted({s.sigma for s in self.scores if s.kind == kind}):
                    sel = self.filter(kind, sigma, rho)
                    if sel:
                        cells[f"rho={rho:g},sigma={sigma:g}"] = {
                            f"{t:g}": success_rate(sel, t) for t in self.thresholds}
            out[kind] = cells
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scores": [s.to_dict() for s in self.scores],
            "vf": {k: v.to_dict() for k, v in self.vf.items()},
            "thresholds": list(self.thresholds),
            "success_rates": self.success_rates(),
            "metadata": self.metadata,
        }


def evaluate_grid(infer: InferFn, systems: Sequence[EvalSystem], config: EvalConfig, seed: int = 0,
                  kinds: Sequence[str] = (TASK_RECONSTRUCTION, TASK_GENERALIZATION),
                  with_plot_data: bool = True) -> EvaluationReport:
    """
    Avalia todos os sistemas sobre a grelha (ρ, σ). Cada célula tem uma seed
    própria, derivada de (seed, índice do sistema, índice da célula).
    """
    config.validate()
    started = time.perf_counter()
    jobs = []
    for si, system in enumerate(systems):
        for ri, rho in enumerate(config.rhos):
            for gi, sigma in enumerate(config.sigmas):
                cell_seed = int(np.random.SeedSequence(seed, spawn_key=(si, ri, gi)).generate_state(1)[0])
                for kind in kinds:
                    if kind == TASK_GENERALIZATION and not system.heldout_ics:
                        continue
                    task = EvalTask(kind=kind, sigma=sigma, rho=rho, n_points=config.n_points,
                                    substeps=config.substeps, seed=cell_seed)
                    jobs.append((system, task))

    def run(job):
        system, task = job
        fn = run_reconstruction if task.kind == TASK_RECONSTRUCTION else run_generalization
        return fn(infer, system, task, bound=config.divergence_bound)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            scores = list(pool.map(run, jobs))
    else:
        scores = [run(j) for j in jobs]

    report = EvaluationReport(scores=scores, thresholds=tuple(config.thresholds),
                              metadata={"seed": seed, "n_systems": len(systems),
                                        "runtime_sec": round(time.perf_counter() - started, 3)})
    if with_plot_data:
        for system in systems:
            report.plot_data.append(trajectory_plot_data(infer, system, config))
    return report


def trajectory_plot_data(infer: InferFn, system: EvalSystem, config: EvalConfig,
                         n_arrows: int = 15) -> Dict[str, Any]:
    """Trajetória de referência vs prevista e amostras do campo para o retrato de fase (2D)."""
    times = system.times(config.n_points)
    reference = system.reference_solution(system.x0, times)
    entry: Dict[str, Any] = {"kind": "trajectory", "system": system.name, "times": times.tolist()}
    if isinstance(reference, Divergence):
        entry["failure"] = "reference_failed"
        return entry
    context = build_context(system, EvalTask(TASK_RECONSTRUCTION, n_points=config.n_points), times, reference)
    field_fn = infer(context)
    states = integrate_on_times(field_fn, system.x0, times, config.substeps, bound=config.divergence_bound)
    entry["reference"] = reference.tolist()
    entry["predicted"] = None if isinstance(states, Divergence) else states[0].tolist()
    entry["context_times"] = context[0].times.tolist()
    entry["context"] = context[0].observations.tolist()
    if system.dimension == 2:
        lo, hi = reference.min(axis=0), reference.max(axis=0)
        pad = 0.2 * np.maximum(hi - lo, 1e-3)
        gx, gy = np.meshgrid(np.linspace(lo[0] - pad[0], hi[0] + pad[0], n_arrows),
                             np.linspace(lo[1] - pad[1], hi[1] + pad[1], n_arrows))
        grid = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        entry["phase"] = {"locations": grid.tolist(), "predicted": np.asarray(field_fn(grid)).tolist(),
                          "true": np.asarray(system.field(grid)).tolist()}
    return entry


# ---------------------------------------------------------------------------
# Avaliação dentro da distribuição (registos do prior)
# ---------------------------------------------------------------------------

def evaluate_records(infer: InferFn, records: Sequence[SystemRecord], config: EvalConfig,
                     sigma: float = 0.0, rho: float = 0.0, seed: int = 0) -> EvaluationReport:
    """
    Reconstrução a partir da trajetória limpa 0 (corrompida com σ, ρ),
    generalização para a trajetória 1 do mesmo sistema e RMSE/cosseno do
    campo nos alvos guardados.
    """
    report = EvaluationReport(thresholds=tuple(config.thresholds), metadata={"seed": seed,
                                                                          "n_records": len(records)})
    for i, record in enumerate(records):
        times = record.clean.times
        reference = record.clean.states[0]
        system = EvalSystem(name=f"record_{record.record_id}",
                            field=lambda x, vf=record.vf: evaluate_field(vf, x),
                            x0=reference[0], t_span=(float(times[0]), float(times[-1])),
                            reference_times=times, reference=reference)
        task_seed = int(np.random.SeedSequence(seed, spawn_key=(i,)).generate_state(1)[0])
        task = EvalTask(TASK_RECONSTRUCTION, sigma=sigma, rho=rho, n_points=times.shape[0],
                        substeps=config.substeps, seed=task_seed)
        context = build_context(system, task, times, reference)
        field_fn = infer(context)
        r2, failure = _rollout_score(field_fn, reference[0], times, reference, task, config.divergence_bound)
        report.scores.append(_score(system, task, r2, failure, len(context[0])))
        if record.clean.n_trajectories > 1:
            other = record.clean.states[1]
            gtask = EvalTask(TASK_GENERALIZATION, sigma=sigma, rho=rho, n_points=times.shape[0],
                             substeps=config.substeps, seed=task_seed)
            r2g, fail_g = _rollout_score(field_fn, other[0], times, other, gtask, config.divergence_bound)
            report.scores.append(_score(system, gtask, r2g, fail_g, len(context[0])))
        report.vf[system.name] = vf_metrics_for_record(field_fn, record)
    return report


# ---------------------------------------------------------------------------
# Benchmarks Van der Pol / FitzHugh-Nagumo
# ---------------------------------------------------------------------------

SUITE_VDP_TASK1 = "vdp_task1"
SUITE_VDP_TASK2 = "vdp_task2"
SUITE_FHN = "fhn"


@dataclass(frozen=True)
class SuiteConfig:
    n_trials: int = 100
    tasks: Tuple[str, ...] = (SUITE_VDP_TASK1, SUITE_VDP_TASK2, SUITE_FHN)
    vdp_n_context: int = 50
    vdp_n_target: int = 50
    vdp_t_end: float = 14.0
    vdp_noise_variance: float = 0.05
    fhn_n_obs: int = 25
    fhn_t_end: float = 5.0
    fhn_noise_variance: float = 0.025
    substeps: int = 20
    divergence_bound: float = 1e4
    finetune: bool = False

    def validate(self) -> None:
        if self.n_trials < 1:
            raise OdeInfConfigError("suite.n_trials deve ser >= 1")
        unknown = set(self.tasks) - {SUITE_VDP_TASK1, SUITE_VDP_TASK2, SUITE_FHN}
        if unknown:
            raise OdeInfConfigError(f"suite.tasks desconhecidas: {sorted(unknown)}")
        if self.vdp_n_context < 2 or self.vdp_n_target < 1 or self.fhn_n_obs < 3:
            raise OdeInfConfigError("suite: número de observações insuficiente")
        if self.vdp_noise_variance < 0 or self.fhn_noise_variance < 0:
            raise OdeInfConfigError("suite: variâncias de ruído devem ser >= 0")


@dataclass
class TrialLayout:
    """Contexto observado e pontos de teste (tempos e estados limpos) de um ensaio."""
    context: List[CorruptedTrajectory]
    test_times: np.ndarray
    test_states: np.ndarray


@dataclass
class TrialResult:
    task: str
    trial: int
    seed: int
    zero_shot_mse: Optional[float]
    finetuned_mse: Optional[float] = None
    baseline_mse: Optional[float] = None
    n_context: int = 0
    n_test: int = 0
    failure: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def summary_statistics(values: Sequence[Optional[float]]) -> Dict[str, Any]:
    vals = np.asarray([v for v in values if v is not None and np.isfinite(v)], dtype=np.float64)
    out: Dict[str, Any] = {"n": int(vals.size), "n_failed": int(len(values) - vals.size)}
    if vals.size:
        out.update(mean=float(vals.mean()), median=float(np.median(vals)), std=float(vals.std()),
                   min=float(vals.min()), max=float(vals.max()))
    else:
        out.update(mean=None, median=None, std=None, min=None, max=None)
    return out


def vdp_layout(config: SuiteConfig, rng: np.random.Generator, irregular: bool = False,
               noise: bool = True) -> TrialLayout:
    """
    Tarefa 1: contexto ruidoso em [0, T/2), teste com pontos limpos em
    [T/2, T] com as duas extremidades. Tarefa 2: instantes do
    contexto irregulares em [0, T/2) com t = 0 forçado.
    """
    system = van_der_pol()
    split = config.vdp_t_end / 2.0
    test_times = np.linspace(split, config.vdp_t_end, config.vdp_n_target)
    if irregular:
        ctx_times = np.sort(rng.uniform(0.0, split, size=config.vdp_n_context - 1))
        ctx_times = np.unique(np.concatenate([[0.0], ctx_times]))
    else:
        ctx_times = np.linspace(0.0, split, config.vdp_n_context, endpoint=False)
    all_times = np.concatenate([ctx_times, test_times])
    clean = solve_reference(system.field, system.initial_condition, all_times)
    if isinstance(clean, Divergence):
        raise OdeInfValidationError("solução de referência de Van der Pol falhou")
    n_ctx = ctx_times.shape[0]
    variance = config.vdp_noise_variance if noise else 0.0
    observed = add_gaussian_noise(clean[:n_ctx], variance, rng)
    return TrialLayout([CorruptedTrajectory.from_observations(ctx_times, observed)], test_times, clean[n_ctx:])


def fhn_layout(config: SuiteConfig, rng: np.random.Generator, noise: bool = True,
               remove_quadrant: bool = True) -> TrialLayout:
    """Observações regulares; os pontos com x1 > 0 e x2 < 0 (estado limpo) são retirados e usados como teste."""
    system = fitzhugh_nagumo()
    times = np.linspace(0.0, config.fhn_t_end, config.fhn_n_obs)
    clean = solve_reference(system.field, system.initial_condition, times)
    if isinstance(clean, Divergence):
        raise OdeInfValidationError("solução de referência de FitzHugh-Nagumo falhou")
    variance = config.fhn_noise_variance if noise else 0.0
    observed = add_gaussian_noise(clean, variance, rng)
    removed = (clean[:, 0] > 0) & (clean[:, 1] < 0) if remove_quadrant else np.zeros(times.shape, bool)
    keep = ~removed
    ctx = CorruptedTrajectory(times[keep], observed[keep], keep)
    if remove_quadrant:
        return TrialLayout([ctx], times[removed], clean[removed])
    return TrialLayout([ctx], times, clean)


def forecast_mse(field_fn: FieldFn, layout: TrialLayout, substeps: int, bound: float) -> Tuple[Optional[float], Optional[str]]:
    """Integra a partir da primeira observação do contexto e mede o MSE nos pontos de teste."""
    if layout.test_times.size == 0:
        return None, "empty_test_set"
    ctx = layout.context[0]
    t0 = ctx.times[0]
    test_mask = layout.test_times > t0
    if not test_mask.any():
        return None, "empty_test_set"
    times = np.unique(np.concatenate([[t0], layout.test_times[test_mask]]))
    states = integrate_on_times(field_fn, ctx.observations[0], times, substeps, bound=bound)
    if isinstance(states, Divergence):
        return None, f"divergence_{states.reason}"
    pred = states[0][np.searchsorted(times, layout.test_times[test_mask])]
    return float(np.mean((pred - layout.test_states[test_mask]) ** 2)), None


def context_mean_mse(layout: TrialLayout) -> Optional[float]:
    """Linha de base: prever a média do contexto em todos os pontos de teste."""
    if layout.test_times.size == 0:
        return None
    mean = layout.context[0].observations.mean(axis=0)
    return float(np.mean((layout.test_states - mean) ** 2))


def run_vdp_fhn_suite(infer: InferFn, config: SuiteConfig, seed: int = 0,
                      finetune_infer: Optional[InferFn] = None,
                      noise: bool = True, remove_quadrant: bool = True) -> Dict[str, Any]:
    """
    ``n_trials`` realizações de ruído/amostragem por tarefa. Falhas por
    ensaio ficam registadas e não interrompem o conjunto.
    """
    config.validate()
    trials: List[TrialResult] = []
    for ti, task in enumerate(config.tasks):
        for trial in range(config.n_trials):
            trial_seed = int(np.random.SeedSequence(seed, spawn_key=(ti, trial)).generate_state(1)[0])
            rng = np.random.default_rng(trial_seed)
            try:
                if task == SUITE_FHN:
                    layout = fhn_layout(config, rng, noise=noise, remove_quadrant=remove_quadrant)
                else:
                    layout = vdp_layout(config, rng, irregular=(task == SUITE_VDP_TASK2), noise=noise)
            except OdeInfValidationError as e:
                trials.append(TrialResult(task, trial, trial_seed, None, failure=str(e)))
                continue
            result = TrialResult(task, trial, trial_seed, None, baseline_mse=context_mean_mse(layout),
                                 n_context=len(layout.context[0]), n_test=int(layout.test_times.size))
            try:
                mse, failure = forecast_mse(infer(layout.context), layout, config.substeps, config.divergence_bound)
                result.zero_shot_mse, result.failure = mse, failure
                if finetune_infer is not None and failure != "empty_test_set":
                    ft_mse, ft_failure = forecast_mse(finetune_infer(layout.context), layout,
                                                      config.substeps, config.divergence_bound)
                    result.finetuned_mse = ft_mse
                    if ft_failure and result.failure is None:
                        result.failure = f"finetuned_{ft_failure}"
            except Exception as e:  # um ensaio nunca aborta o conjunto
                logger.warning(f"{task} ensaio {trial}: {e}")
                result.failure = f"error: {e}"
            trials.append(result)

    summary: Dict[str, Any] = {}
    for task in config.tasks:
        sel = [t for t in trials if t.task == task]
        summary[task] = {
            "zero_shot": summary_statistics([t.zero_shot_mse for t in sel]),
            "baseline": summary_statistics([t.baseline_mse for t in sel]),
            "n_context": summary_statistics([float(t.n_context) for t in sel]),
        }
        if finetune_infer is not None:
            summary[task]["finetuned"] = summary_statistics([t.finetuned_mse for t in sel])
    return {"trials": [t.to_dict() for t in trials], "summary": summary, "seed": seed,
            "n_trials": config.n_trials}
