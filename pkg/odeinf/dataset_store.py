"""
Geração, persistência e batching de SystemRecords.

Cada registo é gerado a partir de um stream de números aleatórios próprio,
derivado de (seed global, dimensão, índice da tentativa). A geração em
paralelo aceita as tentativas pela ordem do índice, por isso o resultado não
depende do número de workers.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from core.exceptions import (
    GenerationExhaustedError,
    OdeInfConfigError,
    OdeInfIOError,
    OdeInfValidationError,
    ShardChecksumError,
    ShardFormatError,
    ShardVersionError,
)
from core.io_utils import atomic_write_json, load_json, sha256_file
from odeinf.container import ContainerErrors, read_container, write_container
from odeinf.corruption import CorruptedTrajectory, CorruptionRanges, corrupt_system
from odeinf.inference_model import ContextBatch, collate_transitions, extract_transitions
from odeinf.ode_prior import PolynomialVectorField, PriorConfig, sample_vector_field
from odeinf.simulation import (
    BoundingBox,
    Rejection,
    TimeGrid,
    TrajectorySet,
    VectorFieldSamples,
    bounding_box,
    sample_vf_targets,
    simulate_system,
)

logger = logging.getLogger(__name__)

SHARD_MAGIC = b"ODEVFSHD"
SHARD_VERSION = 1
# Floats dos shards em float64: a leitura devolve exatamente os valores gerados.
SHARD_FLOAT_DTYPE = "float64"
SHARD_ERRORS = ContainerErrors(format=ShardFormatError, version=ShardVersionError, checksum=ShardChecksumError)
DATASET_MANIFEST = "manifest.json"
DATASET_FORMAT_VERSION = 1
D_MAX = 3

SPLIT_TRAIN = "train"
SPLIT_VALIDATION = "validation"


@dataclass(frozen=True)
class DatasetConfig:
    counts: Dict[str, int] = field(default_factory=lambda: {"1": 2000, "2": 4000, "3": 4000})
    n_trajectories: int = 9
    reject_threshold: float = 100.0
    bbox_expand: float = 0.2
    n_vf: int = 10000
    validation_ratio: float = 0.1
    records_per_shard: int = 500
    max_attempts_factor: int = 50
    block_size: int = 64

    def validate(self) -> None:
        for dim, count in self.counts.items():
            if not str(dim).isdigit() or not 1 <= int(dim) <= D_MAX:
                raise OdeInfConfigError(f"dataset.counts: dimensão inválida '{dim}' (1..{D_MAX})")
            if int(count) < 0:
                raise OdeInfConfigError(f"dataset.counts.{dim} deve ser >= 0")
        if self.n_trajectories < 1:
            raise OdeInfConfigError("dataset.n_trajectories deve ser >= 1")
        if self.reject_threshold <= 0:
            raise OdeInfConfigError("dataset.reject_threshold deve ser > 0")
        if self.bbox_expand < 0:
            raise OdeInfConfigError("dataset.bbox_expand deve ser >= 0")
        if self.n_vf < 1:
            raise OdeInfConfigError("dataset.n_vf deve ser >= 1")
        if not 0.0 <= self.validation_ratio < 1.0:
            raise OdeInfConfigError("dataset.validation_ratio deve estar em [0, 1)")
        if self.records_per_shard < 1 or self.max_attempts_factor < 1 or self.block_size < 1:
            raise OdeInfConfigError("dataset: records_per_shard, max_attempts_factor e block_size devem ser >= 1")

    def dimension_counts(self) -> List[Tuple[int, int]]:
        return sorted((int(d), int(c)) for d, c in self.counts.items())


@dataclass(frozen=True)
class Provenance:
    """Tudo o que é preciso para regenerar um registo bit a bit."""
    global_seed: int
    dimension: int
    attempt: int
    sigma: float
    rho: float

    def to_manifest(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_manifest(cls, data: Dict[str, Any]) -> "Provenance":
        return cls(global_seed=int(data["global_seed"]), dimension=int(data["dimension"]),
                   attempt=int(data["attempt"]), sigma=float(data["sigma"]), rho=float(data["rho"]))


@dataclass(frozen=True)
class SystemRecord:
    record_id: int
    vf: PolynomialVectorField
    clean: TrajectorySet
    corrupted: Tuple[CorruptedTrajectory, ...]
    box: BoundingBox
    vf_targets: VectorFieldSamples
    provenance: Provenance

    @property
    def dimension(self) -> int:
        return self.vf.dimension

    def with_id(self, record_id: int) -> "SystemRecord":
        return SystemRecord(record_id, self.vf, self.clean, self.corrupted, self.box,
                            self.vf_targets, self.provenance)

    def equals(self, other: "SystemRecord") -> bool:
        """Igualdade bit a bit de todos os campos."""
        if (self.record_id != other.record_id or self.provenance != other.provenance
                or self.vf.to_manifest() != other.vf.to_manifest()
                or len(self.corrupted) != len(other.corrupted)):
            return False
        pairs = [(self.clean.times, other.clean.times), (self.clean.states, other.clean.states),
                 (self.box.low, other.box.low), (self.box.high, other.box.high),
                 (self.vf_targets.locations, other.vf_targets.locations),
                 (self.vf_targets.values, other.vf_targets.values)]
        for a, b in zip(self.corrupted, other.corrupted):
            pairs += [(a.times, b.times), (a.observations, b.observations), (a.keep_mask, b.keep_mask)]
        return all(x.shape == y.shape and x.dtype == y.dtype and np.array_equal(x, y) for x, y in pairs)


def record_rng(global_seed: int, dimension: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(global_seed, spawn_key=(dimension, attempt)))


@dataclass(frozen=True)
class GenerationSpec:
    """Parâmetros partilhados por todas as tentativas de uma dimensão (picklable)."""
    prior: PriorConfig
    grid: TimeGrid
    ranges: CorruptionRanges
    dataset: DatasetConfig
    global_seed: int


def generate_record(spec: GenerationSpec, dimension: int, attempt: int) -> Union[SystemRecord, Rejection]:
    """
    Uma tentativa: campo → trajetórias → (σ, ρ) → corrupção → alvos do campo.
    O ``record_id`` fica a -1 até o registo ser aceite.
    """
    rng = record_rng(spec.global_seed, dimension, attempt)
    vf = sample_vector_field(spec.prior.with_dimension(dimension), rng)
    trajs = simulate_system(vf, spec.dataset.n_trajectories, spec.grid, spec.dataset.reject_threshold, rng)
    if isinstance(trajs, Rejection):
        return trajs
    corruption = spec.ranges.sample(rng)
    corrupted = corrupt_system(trajs, corruption, rng)
    box = bounding_box(trajs, spec.dataset.bbox_expand)
    targets = sample_vf_targets(vf, box, spec.dataset.n_vf, rng)
    prov = Provenance(spec.global_seed, dimension, attempt, corruption.sigma, corruption.rho)
    return SystemRecord(-1, vf, trajs, tuple(corrupted), box, targets, prov)


def regenerate_record(provenance: Provenance, spec: GenerationSpec, record_id: int = -1) -> SystemRecord:
    """Regenera um registo a partir da sua proveniência."""
    if provenance.global_seed != spec.global_seed:
        spec = GenerationSpec(spec.prior, spec.grid, spec.ranges, spec.dataset, provenance.global_seed)
    out = generate_record(spec, provenance.dimension, provenance.attempt)
    if isinstance(out, Rejection):
        raise OdeInfValidationError(
            f"proveniência {provenance} corresponde a um sistema rejeitado ({out.reason})")
    if out.provenance != provenance:
        raise OdeInfValidationError(f"proveniência não reproduzível: {out.provenance} != {provenance}")
    return out.with_id(record_id)


def _attempt_block(args: Tuple[GenerationSpec, int, int, int]) -> List[Union[SystemRecord, Rejection]]:
    spec, dimension, start, stop = args
    return [generate_record(spec, dimension, a) for a in range(start, stop)]


class _ShardWriter:
    """Acumula registos de um split e escreve shards completos."""

    def __init__(self, out_dir: Path, split: str, dimension: int, per_shard: int):
        self.out_dir = out_dir
        self.split = split
        self.dimension = dimension
        self.per_shard = per_shard
        self.buffer: List[SystemRecord] = []
        self.shards: List[Dict[str, Any]] = []

    def add(self, record: SystemRecord) -> None:
        self.buffer.append(record)
        if len(self.buffer) >= self.per_shard:
            self.flush()

    def flush(self) -> None:
        if not self.buffer:
            return
        name = f"{self.split}_d{self.dimension}_{len(self.shards):04d}.shard"
        path = self.out_dir / name
        write_shard(path, self.buffer)
        self.shards.append({"path": name, "split": self.split, "dimension": self.dimension,
                            "records": len(self.buffer), "sha256": sha256_file(path)})
        logger.info(f"Shard escrito: {name} ({len(self.buffer)} registos)")
        self.buffer = []


def generate_dataset(prior: PriorConfig, dataset: DatasetConfig, grid: TimeGrid,
                     ranges: CorruptionRanges, global_seed: int, out_dir: Path,
                     workers: int = 1) -> Dict[str, Any]:
    """
    Gera shards de registos aceites até cumprir as contagens por dimensão.

    Os primeiros ``count`` registos aceites de cada dimensão vão para treino,
    os ``round(ratio * count)`` seguintes para validação.

    Returns:
        manifest do dataset (também escrito em ``manifest.json``)

    Raises:
        GenerationExhaustedError: quando uma dimensão não atinge a contagem
            dentro de ``max_attempts_factor * pedido`` tentativas
    """
    prior.validate()
    dataset.validate()
    grid.validate()
    ranges.validate()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OdeInfIOError(f"Não foi possível criar {out_dir}: {e}", path=out_dir) from e

    spec = GenerationSpec(prior, grid, ranges, dataset, global_seed)
    shards: List[Dict[str, Any]] = []
    statistics: Dict[str, Dict[str, Any]] = {}
    splits: Dict[str, List[int]] = {SPLIT_TRAIN: [], SPLIT_VALIDATION: []}
    next_id = 0
    block = max(1, dataset.block_size)

    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for dimension, count in dataset.dimension_counts():
            n_val = int(round(dataset.validation_ratio * count))
            needed = count + n_val
            max_attempts = dataset.max_attempts_factor * max(needed, 1)
            writers = {SPLIT_TRAIN: _ShardWriter(out_dir, SPLIT_TRAIN, dimension, dataset.records_per_shard),
                       SPLIT_VALIDATION: _ShardWriter(out_dir, SPLIT_VALIDATION, dimension,
                                                      dataset.records_per_shard)}
            accepted = 0
            attempted = 0
            reasons: Counter = Counter()
            while accepted < needed:
                if attempted >= max_attempts:
                    stats = _dimension_stats(accepted, attempted, reasons)
                    raise GenerationExhaustedError(
                        f"Dimensão {dimension}: {accepted}/{needed} registos após {attempted} tentativas",
                        statistics={str(dimension): stats})
                starts = range(attempted, attempted + block * max(1, workers), block)
                jobs = [(spec, dimension, s, min(s + block, max_attempts)) for s in starts if s < max_attempts]
                results = (executor.map(_attempt_block, jobs) if executor is not None
                           else map(_attempt_block, jobs))
                for chunk in results:
                    for out in chunk:
                        if accepted >= needed:
                            break
                        attempted += 1
                        if isinstance(out, Rejection):
                            reasons[out.reason] += 1
                            continue
                        split = SPLIT_TRAIN if accepted < count else SPLIT_VALIDATION
                        writers[split].add(out.with_id(next_id))
                        splits[split].append(next_id)
                        next_id += 1
                        accepted += 1
            for writer in writers.values():
                writer.flush()
                shards.extend(writer.shards)
            statistics[str(dimension)] = _dimension_stats(accepted, attempted, reasons)
            logger.info(f"Dimensão {dimension}: {accepted} aceites em {attempted} tentativas "
                        f"(rejeição {statistics[str(dimension)]['rejection_rate']:.3f})")
    finally:
        if executor is not None:
            executor.shutdown()

    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "global_seed": global_seed,
        "config": {
            "prior": asdict(prior),
            "grid": asdict(grid),
            "corruption": asdict(ranges),
            "dataset": asdict(dataset),
        },
        "shards": shards,
        "statistics": statistics,
        "splits": splits,
    }
    atomic_write_json(out_dir / DATASET_MANIFEST, manifest)
    return manifest


def _dimension_stats(accepted: int, attempted: int, reasons: Counter) -> Dict[str, Any]:
    rejected = attempted - accepted
    return {
        "accepted": accepted,
        "attempted": attempted,
        "rejected": rejected,
        "rejection_rate": rejected / attempted if attempted else 0.0,
        "reasons": dict(sorted(reasons.items())),
    }


def rejection_statistics(spec: GenerationSpec, dimension: int, n_attempts: int) -> Dict[str, Any]:
    """Taxa de rejeição sobre as primeiras ``n_attempts`` tentativas, sem escrever nada."""
    reasons: Counter = Counter()
    accepted = 0
    for attempt in range(n_attempts):
        out = generate_record(spec, dimension, attempt)
        if isinstance(out, Rejection):
            reasons[out.reason] += 1
        else:
            accepted += 1
    return _dimension_stats(accepted, n_attempts, reasons)


# ---------------------------------------------------------------------------
# Formato de shard
# ---------------------------------------------------------------------------

def _record_arrays(idx: int, record: SystemRecord) -> List[Tuple[str, np.ndarray]]:
    p = f"r{idx}/"
    arrays = [
        (p + "clean_times", record.clean.times.astype(SHARD_FLOAT_DTYPE)),
        (p + "clean_states", record.clean.states.astype(SHARD_FLOAT_DTYPE)),
        (p + "box_low", record.box.low.astype(SHARD_FLOAT_DTYPE)),
        (p + "box_high", record.box.high.astype(SHARD_FLOAT_DTYPE)),
        (p + "vf_locations", record.vf_targets.locations.astype(SHARD_FLOAT_DTYPE)),
        (p + "vf_values", record.vf_targets.values.astype(SHARD_FLOAT_DTYPE)),
    ]
    for k, traj in enumerate(record.corrupted):
        arrays += [
            (f"{p}corrupted{k}_times", traj.times.astype(SHARD_FLOAT_DTYPE)),
            (f"{p}corrupted{k}_observations", traj.observations.astype(SHARD_FLOAT_DTYPE)),
            (f"{p}corrupted{k}_mask", traj.keep_mask.astype(np.uint8)),
        ]
    return arrays


def write_shard(path: Path, records: Sequence[SystemRecord]) -> int:
    """
    Escreve um shard. O manifest declara o dtype dos floats (`float_dtype`,
    float64) e lista, por registo, o campo vetorial, a proveniência e os
    offsets (início/fim) dos seus bytes no blob.
    """
    arrays: List[Tuple[str, np.ndarray]] = []
    entries = []
    offset = 0
    for idx, record in enumerate(records):
        rec_arrays = _record_arrays(idx, record)
        nbytes = sum(np.ascontiguousarray(a).nbytes for _, a in rec_arrays)
        entries.append({
            "record_id": record.record_id,
            "dimension": record.dimension,
            "n_corrupted": len(record.corrupted),
            "vf": record.vf.to_manifest(),
            "provenance": record.provenance.to_manifest(),
            "byte_range": [offset, offset + nbytes],
        })
        offset += nbytes
        arrays.extend(rec_arrays)
    manifest = {"format": "odeinf-shard", "float_dtype": SHARD_FLOAT_DTYPE, "records": entries}
    return write_container(Path(path), SHARD_MAGIC, SHARD_VERSION, len(records), manifest, arrays, SHARD_ERRORS)


def load_shard(path: Path) -> List[SystemRecord]:
    """Lê um shard e reconstrói os registos (floats bit a bit iguais aos escritos)."""
    _version, count, manifest, arrays = read_container(Path(path), SHARD_MAGIC, (SHARD_VERSION,), SHARD_ERRORS)
    if manifest.get("float_dtype") != SHARD_FLOAT_DTYPE:
        raise ShardFormatError(f"{path}: float_dtype {manifest.get('float_dtype')!r} não suportado "
                               f"(esperado {SHARD_FLOAT_DTYPE})", path=Path(path))
    entries = manifest.get("records", [])
    if len(entries) != count:
        raise ShardFormatError(f"{path}: cabeçalho indica {count} registos, manifest tem {len(entries)}",
                               path=Path(path))
    records = []
    try:
        for idx, entry in enumerate(entries):
            p = f"r{idx}/"
            corrupted = tuple(
                CorruptedTrajectory(arrays[f"{p}corrupted{k}_times"],
                                    arrays[f"{p}corrupted{k}_observations"],
                                    arrays[f"{p}corrupted{k}_mask"].astype(bool))
                for k in range(int(entry["n_corrupted"]))
            )
            records.append(SystemRecord(
                record_id=int(entry["record_id"]),
                vf=PolynomialVectorField.from_manifest(entry["vf"]),
                clean=TrajectorySet(arrays[p + "clean_times"], arrays[p + "clean_states"]),
                corrupted=corrupted,
                box=BoundingBox(arrays[p + "box_low"], arrays[p + "box_high"]),
                vf_targets=VectorFieldSamples(arrays[p + "vf_locations"], arrays[p + "vf_values"]),
                provenance=Provenance.from_manifest(entry["provenance"]),
            ))
    except (KeyError, OdeInfValidationError) as e:
        raise ShardFormatError(f"{path}: registo inconsistente: {e}", path=Path(path)) from e
    return records


def load_manifest(dataset_dir: Path) -> Dict[str, Any]:
    path = Path(dataset_dir) / DATASET_MANIFEST
    if not path.exists():
        raise OdeInfIOError(f"Manifest do dataset não encontrado: {path}", path=path)
    return load_json(path)


def iter_records(dataset_dir: Path, split: Optional[str] = None,
                 dimension: Optional[int] = None, verify: bool = True) -> Iterator[SystemRecord]:
    """Percorre os registos do dataset pela ordem do manifest."""
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    for shard in manifest["shards"]:
        if split is not None and shard["split"] != split:
            continue
        if dimension is not None and int(shard["dimension"]) != dimension:
            continue
        path = dataset_dir / shard["path"]
        if verify and path.exists() and sha256_file(path) != shard["sha256"]:
            raise ShardChecksumError(f"{path}: sha256 diferente do manifest do dataset", path=path)
        yield from load_shard(path)


def load_records(dataset_dir: Path, split: Optional[str] = None,
                 dimension: Optional[int] = None) -> List[SystemRecord]:
    return list(iter_records(dataset_dir, split=split, dimension=dimension))


def generation_spec_from_manifest(manifest: Dict[str, Any]) -> GenerationSpec:
    """Reconstrói o GenerationSpec gravado no manifest (para regenerar registos)."""
    cfg = manifest["config"]
    prior = cfg["prior"]
    ds = cfg["dataset"]
    corruption = cfg["corruption"]
    return GenerationSpec(
        prior=PriorConfig(**{**prior, "scale_range": tuple(prior["scale_range"])}),
        grid=TimeGrid(**cfg["grid"]),
        ranges=CorruptionRanges(sigma_range=tuple(corruption["sigma_range"]),
                                rho_range=tuple(corruption["rho_range"])),
        dataset=DatasetConfig(**ds),
        global_seed=int(manifest["global_seed"]),
    )


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

QuerySampler = Callable[[SystemRecord, int, np.random.Generator, Sequence[int]], Tuple[np.ndarray, np.ndarray]]


@dataclass
class Batch:
    """Contextos em tensores com padding, queries e alvos (unidades originais)."""
    context: ContextBatch
    queries: torch.Tensor       # (B, Q, D)
    targets: torch.Tensor       # (B, Q, D)
    record_ids: List[int]
    context_sizes: List[int]

    @property
    def size(self) -> int:
        return len(self.record_ids)

    def to(self, dtype: torch.dtype = None, device: Union[str, torch.device] = None) -> "Batch":
        return Batch(self.context.to(dtype=dtype, device=device),
                     self.queries.to(dtype=dtype or self.queries.dtype, device=device),
                     self.targets.to(dtype=dtype or self.targets.dtype, device=device),
                     list(self.record_ids), list(self.context_sizes))


def make_batch(records: Sequence[SystemRecord], k_range: Tuple[int, int], rng: np.random.Generator,
               n_queries: int = 0, query_sampler: Optional[QuerySampler] = None,
               d_max: int = D_MAX, dtype: torch.dtype = torch.float32,
               use_all: bool = False) -> Batch:
    """
    Por registo: K ~ U{k_lo..k_hi}, escolhe K trajetórias corrompidas e extrai
    as transições. As queries são delegadas a ``query_sampler``.

    Com ``use_all`` o contexto usa todas as trajetórias corrompidas (validação).
    """
    k_lo, k_hi = k_range
    if not 1 <= k_lo <= k_hi:
        raise OdeInfValidationError(f"intervalo de K inválido: {k_range}")
    if not records:
        raise OdeInfValidationError("make_batch sem registos")
    if n_queries > 0 and query_sampler is None:
        raise OdeInfValidationError("n_queries > 0 exige query_sampler")
    transitions = []
    queries = np.zeros((len(records), n_queries, d_max))
    targets = np.zeros((len(records), n_queries, d_max))
    sizes = []
    for b, record in enumerate(records):
        n_avail = len(record.corrupted)
        if use_all:
            chosen = np.arange(n_avail)
        else:
            if n_avail < k_hi:
                raise OdeInfValidationError(
                    f"registo {record.record_id} tem {n_avail} trajetórias (< {k_hi})")
            k = int(rng.integers(k_lo, k_hi + 1))
            chosen = np.sort(rng.choice(n_avail, size=k, replace=False))
        transitions.append(extract_transitions([record.corrupted[i] for i in chosen]))
        sizes.append(len(chosen))
        if n_queries > 0:
            loc, val = query_sampler(record, n_queries, rng, [int(i) for i in chosen])
            d = record.dimension
            queries[b, :, :d] = loc
            targets[b, :, :d] = val
    context = collate_transitions(transitions, d_max=d_max, dtype=dtype)
    return Batch(context, torch.as_tensor(queries, dtype=dtype), torch.as_tensor(targets, dtype=dtype),
                 [r.record_id for r in records], sizes)


# ---------------------------------------------------------------------------
# Estatísticas de fronteira
# ---------------------------------------------------------------------------

@dataclass
class BoundaryStatistics:
    dimension: int
    n_records: int
    edges: np.ndarray
    counts: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    std: np.ndarray
    quantiles: Dict[str, np.ndarray]

    def to_table(self) -> str:
        header = f"{'bin':>13} {'n':>8} {'mean':>10} {'median':>10} {'std':>10} " + " ".join(
            f"{k:>10}" for k in self.quantiles)
        lines = [f"Magnitude do campo por distância relativa à fronteira (d={self.dimension}, "
                 f"{self.n_records} sistemas)", header, "-" * len(header)]
        for i in range(len(self.counts)):
            qs = " ".join(f"{self.quantiles[k][i]:>10.4g}" for k in self.quantiles)
            lines.append(f"[{self.edges[i]:.2f}, {self.edges[i + 1]:.2f}) {int(self.counts[i]):>8d} "
                         f"{self.mean[i]:>10.4g} {self.median[i]:>10.4g} {self.std[i]:>10.4g} {qs}")
        return "\n".join(lines) + "\n"

    def to_plot_data(self) -> Dict[str, Any]:
        def clean(a):
            return [None if not np.isfinite(v) else float(v) for v in a]
        return {
            "kind": "boundary_statistics",
            "dimension": self.dimension,
            "n_records": self.n_records,
            "edges": [float(e) for e in self.edges],
            "counts": [int(c) for c in self.counts],
            "mean": clean(self.mean),
            "median": clean(self.median),
            "std": clean(self.std),
            "quantiles": {k: clean(v) for k, v in self.quantiles.items()},
        }


def relative_boundary_distance(locations: np.ndarray, box: BoundingBox) -> np.ndarray:
    """min_j min(x_j - lo_j, hi_j - x_j) / (hi_j - lo_j), em [0, 0.5] dentro da caixa."""
    span = np.maximum(box.high - box.low, 1e-300)
    dist = np.minimum(locations - box.low, box.high - locations) / span
    return np.clip(dist.min(axis=-1), 0.0, 0.5)


def boundary_statistics(records: Sequence[SystemRecord], n_bins: int = 10) -> BoundaryStatistics:
    """Agrupa |f| dos alvos por distância relativa à fronteira da caixa."""
    if not records:
        raise OdeInfValidationError("boundary_statistics sem registos")
    dims = {r.dimension for r in records}
    if len(dims) != 1:
        raise OdeInfValidationError(f"registos de dimensões diferentes: {sorted(dims)}")
    dist = np.concatenate([relative_boundary_distance(r.vf_targets.locations, r.box) for r in records])
    mag = np.concatenate([np.linalg.norm(r.vf_targets.values, axis=-1) for r in records])
    edges = np.linspace(0.0, 0.5, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, dist, side="right") - 1, 0, n_bins - 1)
    qnames = {"q05": 0.05, "q25": 0.25, "q75": 0.75, "q95": 0.95}
    counts = np.zeros(n_bins, dtype=np.int64)
    mean, median, std = (np.full(n_bins, np.nan) for _ in range(3))
    quantiles = {k: np.full(n_bins, np.nan) for k in qnames}
    for i in range(n_bins):
        vals = mag[idx == i]
        counts[i] = vals.size
        if vals.size:
            mean[i] = vals.mean()
            median[i] = np.median(vals)
            std[i] = vals.std()
            for k, q in qnames.items():
                quantiles[k][i] = np.quantile(vals, q)
    return BoundaryStatistics(dims.pop(), len(records), edges, counts, mean, median, std, quantiles)
