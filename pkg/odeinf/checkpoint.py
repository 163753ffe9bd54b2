"""
Checkpoints do modelo: manifest (config, passo, estado do rng, nomes e formas
dos parâmetros por ordem declarada) e arrays little-endian, no mesmo
contentor versionado dos shards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch

from core.exceptions import CheckpointFormatError
from odeinf.container import ContainerErrors, read_container, write_container
from odeinf.inference_model import ModelConfig, VectorFieldModel

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ODEVFCKP"
CHECKPOINT_VERSION = 1
CHECKPOINT_ERRORS = ContainerErrors(format=CheckpointFormatError, version=CheckpointFormatError,
                                    checksum=CheckpointFormatError)


@dataclass
class Checkpoint:
    model: VectorFieldModel
    step: int
    rng_state: Dict[str, Any] = field(default_factory=dict)
    optimizer_state: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)


def _optimizer_arrays(optimizer: torch.optim.Optimizer) -> Tuple[Dict[str, Any], List[Tuple[str, np.ndarray]]]:
    sd = optimizer.state_dict()
    arrays = []
    slots: Dict[str, Dict[str, Any]] = {}
    for idx, state in sd["state"].items():
        entry = {}
        for key, value in state.items():
            if torch.is_tensor(value) and key != "step":
                name = f"optim/{idx}/{key}"
                arrays.append((name, value.detach().cpu().numpy()))
                entry[key] = {"array": name}
            else:
                entry[key] = {"value": float(value)}
        slots[str(idx)] = entry
    return {"param_groups": sd["param_groups"], "state": slots}, arrays


def save_checkpoint(path: Path, model: VectorFieldModel, step: int,
                    rng_state: Optional[Dict[str, Any]] = None,
                    optimizer: Optional[torch.optim.Optimizer] = None,
                    extra: Optional[Dict[str, Any]] = None) -> Path:
    """Escreve o checkpoint de forma atómica."""
    state = model.state_dict()
    names = list(state.keys())
    arrays = [(f"param/{name}", state[name].detach().cpu().numpy()) for name in names]
    manifest: Dict[str, Any] = {
        "format": "odeinf-checkpoint",
        "model_config": model.config.to_manifest(),
        "dtype": str(model.dtype).replace("torch.", ""),
        "step": int(step),
        "rng_state": rng_state or {},
        "parameters": [{"name": n, "shape": list(state[n].shape)} for n in names],
        "extra": extra or {},
    }
    if optimizer is not None:
        optim_manifest, optim_arrays = _optimizer_arrays(optimizer)
        manifest["optimizer"] = optim_manifest
        arrays.extend(optim_arrays)
    if rng_state and "torch" in rng_state:
        manifest["rng_state"] = {k: v for k, v in rng_state.items() if k != "torch"}
        arrays.append(("rng/torch", np.asarray(rng_state["torch"], dtype=np.uint8)))
    write_container(Path(path), CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(names), manifest, arrays,
                    CHECKPOINT_ERRORS)
    logger.debug(f"Checkpoint escrito: {path} (passo {step})")
    return Path(path)


def load_checkpoint(path: Path, dtype: Optional[torch.dtype] = None) -> Checkpoint:
    """
    Reconstrói o modelo com os pesos guardados.

    Raises:
        CheckpointFormatError: magic, versão, checksum ou parâmetros inconsistentes
    """
    _version, count, manifest, arrays = read_container(Path(path), CHECKPOINT_MAGIC, (CHECKPOINT_VERSION,),
                                                       CHECKPOINT_ERRORS)
    try:
        config = ModelConfig.from_manifest(manifest["model_config"])
        stored_dtype = getattr(torch, manifest.get("dtype", "float32"))
        params = manifest["parameters"]
    except (KeyError, TypeError, AttributeError) as e:
        raise CheckpointFormatError(f"{path}: manifest incompleto: {e}", path=Path(path)) from e
    if len(params) != count:
        raise CheckpointFormatError(f"{path}: cabeçalho indica {count} tensores, manifest tem {len(params)}",
                                    path=Path(path))
    model = VectorFieldModel(config).to(stored_dtype)
    expected = model.state_dict()
    if [p["name"] for p in params] != list(expected.keys()):
        raise CheckpointFormatError(f"{path}: nomes de parâmetros não correspondem ao modelo", path=Path(path))
    loaded = {}
    for p in params:
        arr = arrays[f"param/{p['name']}"]
        if list(arr.shape) != list(expected[p["name"]].shape):
            raise CheckpointFormatError(f"{path}: forma inválida para {p['name']}", path=Path(path))
        loaded[p["name"]] = torch.from_numpy(arr)
    model.load_state_dict(loaded)
    if dtype is not None:
        model = model.to(dtype)

    rng_state = dict(manifest.get("rng_state", {}))
    if "rng/torch" in arrays:
        rng_state["torch"] = arrays["rng/torch"]
    optimizer_state = None
    if "optimizer" in manifest:
        optimizer_state = {"param_groups": manifest["optimizer"]["param_groups"], "state": {}}
        for idx, entry in manifest["optimizer"]["state"].items():
            optimizer_state["state"][int(idx)] = {
                key: (torch.from_numpy(arrays[spec["array"]]) if "array" in spec else torch.tensor(spec["value"]))
                for key, spec in entry.items()
            }
    return Checkpoint(model=model, step=int(manifest["step"]), rng_state=rng_state,
                      optimizer_state=optimizer_state, extra=manifest.get("extra", {}))


def restore_optimizer(optimizer: torch.optim.Optimizer, checkpoint: Checkpoint) -> None:
    if checkpoint.optimizer_state is not None:
        optimizer.load_state_dict(checkpoint.optimizer_state)
