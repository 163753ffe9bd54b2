"""
Fixtures partilhadas: registos pequenos do prior e um modelo tiny em float64.
"""

from typing import List

import numpy as np
import pytest
import torch

from odeinf.corruption import CorruptionRanges
from odeinf.dataset_store import DatasetConfig, GenerationSpec, SystemRecord, generate_record
from odeinf.inference_model import VectorFieldModel, build_model, model_config_for
from odeinf.ode_prior import PriorConfig
from odeinf.simulation import Rejection, TimeGrid

SMALL_GRID = TimeGrid(t_end=2.45, n_points=50, substeps=5)
SMALL_DATASET = DatasetConfig(counts={"1": 6, "2": 4}, n_trajectories=3, n_vf=64, validation_ratio=0.5,
                              records_per_shard=3, block_size=8)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def small_spec() -> GenerationSpec:
    return GenerationSpec(prior=PriorConfig(max_degree=2), grid=SMALL_GRID, ranges=CorruptionRanges(),
                          dataset=SMALL_DATASET, global_seed=7)


def accepted_records(spec: GenerationSpec, dimension: int, n: int) -> List[SystemRecord]:
    out: List[SystemRecord] = []
    attempt = 0
    while len(out) < n:
        rec = generate_record(spec, dimension, attempt)
        attempt += 1
        if not isinstance(rec, Rejection):
            out.append(rec.with_id(len(out)))
    return out


@pytest.fixture
def records_1d(small_spec) -> List[SystemRecord]:
    return accepted_records(small_spec, 1, 4)


@pytest.fixture
def records_2d(small_spec) -> List[SystemRecord]:
    return accepted_records(small_spec, 2, 3)


@pytest.fixture
def tiny_model() -> VectorFieldModel:
    return build_model(model_config_for("tiny", dropout=0.0), seed=0, dtype=torch.float64)
