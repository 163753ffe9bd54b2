"""
Configuração de runs: um ficheiro JSON com blocos por módulo.

Cada bloco é convertido para o dataclass do módulo correspondente. Chaves
desconhecidas em qualquer nível são rejeitadas com o caminho completo
(ex.: ``training.lrr``). Blocos em falta ficam com os valores por omissão.
"""

import copy
import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

from core.exceptions import OdeInfConfigError
from core.io_utils import load_json
from odeinf.corruption import CorruptionRanges
from odeinf.dataset_store import DatasetConfig
from odeinf.evaluation import EvalConfig, SuiteConfig
from odeinf.inference_model import MODEL_PRESETS, ModelConfig, model_config_for
from odeinf.ode_prior import PriorConfig
from odeinf.simulation import TimeGrid
from odeinf.training import FinetuneConfig, TrainConfig

T = TypeVar("T")

DEFAULT_PRESET = "desk"


@dataclass(frozen=True)
class PathsConfig:
    """Inputs das apps. Caminhos relativos são resolvidos contra ``--base-dir``."""
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    context: Optional[str] = None
    queries: Optional[str] = None
    validation_context: Optional[str] = None
    plot_data: Optional[str] = None
    metrics: Optional[str] = None
    resume: Optional[str] = None


@dataclass(frozen=True)
class ModelSettings:
    """Preset + overrides campo a campo de ``ModelConfig``."""
    preset: str = DEFAULT_PRESET
    overrides: Dict[str, Any] = field(default_factory=dict)

    def resolve(self) -> ModelConfig:
        return model_config_for(self.preset, **self.overrides)


@dataclass(frozen=True)
class RunConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    grid: TimeGrid = field(default_factory=TimeGrid)
    corruption: CorruptionRanges = field(default_factory=CorruptionRanges)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelSettings = field(default_factory=ModelSettings)
    training: TrainConfig = field(default_factory=TrainConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    suite: SuiteConfig = field(default_factory=SuiteConfig)
    seed: int = 0
    workers: Optional[int] = None
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> None:
        for block in (self.prior, self.grid, self.corruption, self.dataset, self.training,
                      self.finetune, self.eval, self.suite):
            block.validate()
        self.model.resolve()
        if self.seed < 0:
            raise OdeInfConfigError("seed deve ser >= 0")
        if self.workers is not None and self.workers < 1:
            raise OdeInfConfigError("workers deve ser >= 1")

    def model_config(self) -> ModelConfig:
        return self.model.resolve()

    def effective_workers(self) -> int:
        """Workers de geração e avaliação: o configurado, senão todos os cores."""
        return self.workers if self.workers is not None else max(1, os.cpu_count() or 1)

    def to_dict(self) -> Dict[str, Any]:
        """Config resolvida (forma do ficheiro, com o preset expandido)."""
        data = dataclasses.asdict(self)
        data["model"] = {"preset": self.model.preset, **self.model.resolve().to_manifest()}
        return data

    def to_file_dict(self) -> Dict[str, Any]:
        """Forma do ficheiro de entrada (preset + overrides), para reaplicar overrides."""
        data = dataclasses.asdict(self)
        data["model"] = {"preset": self.model.preset, **self.model.overrides}
        return data


# ---------------------------------------------------------------------------
# Conversão dict -> dataclass
# ---------------------------------------------------------------------------

def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)

    if tp is Any:
        return value
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, Mapping):
            raise OdeInfConfigError(f"{path}: esperado objeto, recebido {type(value).__name__}")
        return build_dataclass(tp, value, path)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise OdeInfConfigError(f"{path}: esperada lista, recebido {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise OdeInfConfigError(f"{path}: esperados {len(args)} valores, recebidos {len(value)}")
        return tuple(_coerce(v, a, f"{path}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if origin is dict:
        if not isinstance(value, Mapping):
            raise OdeInfConfigError(f"{path}: esperado objeto, recebido {type(value).__name__}")
        return dict(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise OdeInfConfigError(f"{path}: esperado booleano, recebido {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise OdeInfConfigError(f"{path}: esperado inteiro, recebido {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise OdeInfConfigError(f"{path}: esperado número, recebido {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise OdeInfConfigError(f"{path}: esperado texto, recebido {value!r}")
        return value
    raise OdeInfConfigError(f"{path}: tipo não suportado {_type_name(tp)}")


def build_dataclass(cls: Type[T], data: Mapping[str, Any], path: str = "") -> T:
    """
    Constrói ``cls`` a partir de um dict, rejeitando chaves desconhecidas.

    Raises:
        OdeInfConfigError: chave desconhecida ou valor do tipo errado (a
            mensagem nomeia o caminho com pontos)
    """
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in names:
            raise OdeInfConfigError(f"chave de configuração desconhecida: '{dotted}'")
        kwargs[key] = _coerce(value, hints[key], dotted)
    return cls(**kwargs)


def _model_settings(data: Any) -> ModelSettings:
    if not isinstance(data, Mapping):
        raise OdeInfConfigError("model: esperado objeto")
    data = dict(data)
    preset = data.pop("preset", DEFAULT_PRESET)
    if preset not in MODEL_PRESETS:
        raise OdeInfConfigError(f"model.preset desconhecido '{preset}' (disponíveis: {sorted(MODEL_PRESETS)})")
    overrides = build_dataclass(ModelConfig, data, "model") if data else None
    return ModelSettings(preset=preset,
                         overrides={k: getattr(overrides, k) for k in data} if overrides else {})


def _apply_override(data: Dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise OdeInfConfigError(f"override inválido: '{dotted}'")
    node[parts[-1]] = value


def run_config_from_dict(data: Mapping[str, Any],
                         overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    data = copy.deepcopy(dict(data))
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _apply_override(data, dotted, value)
    model = _model_settings(data.pop("model", {}))
    config = build_dataclass(RunConfig, data)
    config = dataclasses.replace(config, model=model)
    config.validate()
    return config


def load_run_config(path: Optional[Path], overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """
    Lê e valida o ficheiro de configuração. ``path=None`` usa só os defaults.

    Args:
        overrides: ``{"seed": 3, "model.preset": "tiny"}``; valores None são ignorados

    Raises:
        OdeInfConfigError: chave desconhecida ou valor inválido
        OdeInfIOError: ficheiro em falta ou ilegível
    """
    data = load_json(Path(path)) if path is not None else {}
    if not isinstance(data, dict):
        raise OdeInfConfigError(f"{path}: a configuração deve ser um objeto JSON")
    return run_config_from_dict(data, overrides)
