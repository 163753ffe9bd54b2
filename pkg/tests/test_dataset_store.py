"""Geração de datasets, formato de shard, batching e estatísticas de fronteira."""

import dataclasses

import numpy as np
import pytest
import torch

from core.exceptions import GenerationExhaustedError, OdeInfConfigError, OdeInfValidationError, ShardChecksumError, \
    ShardFormatError, ShardVersionError
from odeinf.container import HEADER, read_container, write_container
from odeinf.corruption import CorruptionRanges
from odeinf.dataset_store import (DATASET_MANIFEST, SHARD_ERRORS, SHARD_MAGIC, SHARD_VERSION, SPLIT_TRAIN,
                                  SPLIT_VALIDATION, DatasetConfig, boundary_statistics,
                                  generate_dataset, generation_spec_from_manifest, load_manifest, load_records,
                                  load_shard, make_batch, regenerate_record, rejection_statistics,
                                  relative_boundary_distance, write_shard)
from odeinf.ode_prior import PriorConfig
from odeinf.simulation import BoundingBox, TimeGrid
from odeinf.training import sample_query_locations
from tests.conftest import SMALL_DATASET, SMALL_GRID


def _generate(out_dir, workers=1, seed=7, dataset=SMALL_DATASET):
    return generate_dataset(PriorConfig(max_degree=2), dataset, SMALL_GRID, CorruptionRanges(), seed, out_dir,
                            workers=workers)


def test_generation_counts_and_splits(tmp_path):
    manifest = _generate(tmp_path)
    train = load_records(tmp_path, split=SPLIT_TRAIN)
    val = load_records(tmp_path, split=SPLIT_VALIDATION)
    assert [r.dimension for r in train].count(1) == 6
    assert [r.dimension for r in train].count(2) == 4
    assert [r.dimension for r in val].count(1) == 3
    assert [r.dimension for r in val].count(2) == 2
    ids = [r.record_id for r in train + val]
    assert sorted(ids) == list(range(len(ids)))
    assert sorted(manifest["splits"][SPLIT_TRAIN] + manifest["splits"][SPLIT_VALIDATION]) == sorted(ids)
    for dim, stats in manifest["statistics"].items():
        assert stats["accepted"] + stats["rejected"] == stats["attempted"]
        assert 0.0 <= stats["rejection_rate"] < 1.0
    assert load_manifest(tmp_path) == manifest


def test_records_respect_their_invariants(tmp_path):
    _generate(tmp_path)
    for record in load_records(tmp_path, dimension=2):
        assert record.clean.states.shape == (3, 50, 2)
        assert np.all(np.abs(record.clean.states) <= SMALL_DATASET.reject_threshold)
        assert len(record.corrupted) == 3
        assert record.box.contains(record.clean.states.reshape(-1, 2)).all()
        assert record.box.contains(record.vf_targets.locations).all()
        np.testing.assert_array_equal(record.vf_targets.values, record.vf(record.vf_targets.locations))
        prov = record.provenance
        assert 0.0 <= prov.sigma <= 0.06 and 0.0 <= prov.rho <= 0.5


def test_generation_is_reproducible_and_worker_independent(tmp_path):
    """Mesma seed: shards idênticos byte a byte, com 1 ou 2 workers."""
    a = _generate(tmp_path / "a", workers=1)
    b = _generate(tmp_path / "b", workers=1)
    c = _generate(tmp_path / "c", workers=2)
    sums = lambda m: [(s["path"], s["sha256"]) for s in m["shards"]]  # noqa: E731
    assert sums(a) == sums(b) == sums(c)
    assert (tmp_path / "a" / DATASET_MANIFEST).read_bytes() == (tmp_path / "c" / DATASET_MANIFEST).read_bytes()


def test_different_seeds_give_different_data(tmp_path):
    a = _generate(tmp_path / "a", seed=1)
    b = _generate(tmp_path / "b", seed=2)
    assert [s["sha256"] for s in a["shards"]] != [s["sha256"] for s in b["shards"]]


def test_record_regenerates_from_provenance(tmp_path):
    manifest = _generate(tmp_path)
    spec = generation_spec_from_manifest(manifest)
    for record in load_records(tmp_path, split=SPLIT_VALIDATION):
        again = regenerate_record(record.provenance, spec, record_id=record.record_id)
        assert again.equals(record)


def test_shard_round_trip_is_bit_exact(tmp_path, records_2d):
    path = tmp_path / "x.shard"
    write_shard(path, records_2d)
    back = load_shard(path)
    assert len(back) == len(records_2d)
    assert all(a.equals(b) for a, b in zip(records_2d, back))


def test_shard_manifest_declares_float_dtype(tmp_path, records_1d):
    path = tmp_path / "x.shard"
    write_shard(path, records_1d)
    _version, _count, manifest, arrays = read_container(path, SHARD_MAGIC, (SHARD_VERSION,), SHARD_ERRORS)
    assert manifest["float_dtype"] == "float64"
    assert arrays["r0/clean_states"].dtype == np.float64
    assert arrays["r0/vf_values"].dtype == np.float64

    manifest["float_dtype"] = "float32"
    write_container(path, SHARD_MAGIC, SHARD_VERSION, len(records_1d), manifest, list(arrays.items()), SHARD_ERRORS)
    with pytest.raises(ShardFormatError, match="float_dtype"):
        load_shard(path)


def test_truncated_shard_fails_checksum(tmp_path, records_1d):
    path = tmp_path / "x.shard"
    write_shard(path, records_1d)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(ShardChecksumError):
        load_shard(path)


def test_flipped_byte_fails_checksum(tmp_path, records_1d):
    path = tmp_path / "x.shard"
    write_shard(path, records_1d)
    raw = bytearray(path.read_bytes())
    raw[HEADER.size + 50] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ShardChecksumError):
        load_shard(path)


def test_wrong_magic_and_version(tmp_path, records_1d):
    path = tmp_path / "x.shard"
    write_shard(path, records_1d)
    raw = bytearray(path.read_bytes())

    bad_magic = bytearray(raw)
    bad_magic[0:8] = b"NOTASHRD"
    (tmp_path / "magic.shard").write_bytes(bytes(bad_magic))
    with pytest.raises(ShardFormatError):
        load_shard(tmp_path / "magic.shard")

    bad_version = bytearray(raw)
    bad_version[8:10] = (99).to_bytes(2, "little")
    (tmp_path / "version.shard").write_bytes(bytes(bad_version))
    with pytest.raises(ShardVersionError):
        load_shard(tmp_path / "version.shard")


def test_tampered_shard_is_caught_by_dataset_manifest(tmp_path, records_1d):
    _generate(tmp_path)
    manifest = load_manifest(tmp_path)
    # shard válido mas diferente do registado no manifest
    write_shard(tmp_path / manifest["shards"][0]["path"], records_1d)
    with pytest.raises(ShardChecksumError):
        load_records(tmp_path)


def test_exhausted_generation_reports_statistics(tmp_path):
    dataset = dataclasses.replace(SMALL_DATASET, counts={"1": 2}, validation_ratio=0.0, reject_threshold=1e-6,
                                  max_attempts_factor=2)
    with pytest.raises(GenerationExhaustedError) as info:
        _generate(tmp_path, dataset=dataset)
    stats = info.value.statistics["1"]
    assert stats["accepted"] == 0
    assert stats["attempted"] == 4
    assert stats["reasons"] == {"initial_condition": 4}


@pytest.mark.parametrize("kwargs", [{"counts": {"4": 1}}, {"counts": {"1": -1}}, {"n_vf": 0},
                                    {"validation_ratio": 1.0}, {"n_trajectories": 0}])
def test_invalid_dataset_config(kwargs):
    with pytest.raises(OdeInfConfigError):
        DatasetConfig(**kwargs).validate()


def test_rejection_statistics_counts_every_attempt(small_spec):
    stats = rejection_statistics(small_spec, 1, 20)
    assert stats["attempted"] == 20
    assert stats["accepted"] + sum(stats["reasons"].values()) == 20


def test_make_batch_pads_mixed_dimensions(rng, records_1d, records_2d):
    records = records_1d[:2] + records_2d[:2]
    batch = make_batch(records, (1, 3), rng, n_queries=8, query_sampler=sample_query_locations,
                       dtype=torch.float64)
    assert batch.size == 4
    assert batch.queries.shape == (4, 8, 3)
    assert batch.context.dim_mask.tolist() == [[1, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 0]]
    assert float(batch.queries[:2, :, 1:].abs().max()) == 0.0
    assert float(batch.targets[2:, :, 2].abs().max()) == 0.0
    assert all(1 <= k <= 3 for k in batch.context_sizes)
    # J de cada registo = soma (L_k - 1) das trajetórias escolhidas
    assert int(batch.context.valid_counts().max()) == batch.context.states.shape[1]


def test_make_batch_with_all_trajectories(rng, records_1d):
    batch = make_batch(records_1d, (1, 1), rng, use_all=True)
    assert batch.context_sizes == [3] * len(records_1d)
    expected = [sum(len(t) - 1 for t in r.corrupted) for r in records_1d]
    assert batch.context.valid_counts().tolist() == expected


def test_make_batch_contract_violations(rng, records_1d):
    with pytest.raises(OdeInfValidationError):
        make_batch(records_1d, (0, 2), rng)
    with pytest.raises(OdeInfValidationError):
        make_batch(records_1d, (1, 5), rng)
    with pytest.raises(OdeInfValidationError):
        make_batch([], (1, 1), rng)
    with pytest.raises(OdeInfValidationError):
        make_batch(records_1d, (1, 1), rng, n_queries=4)


def test_make_batch_is_deterministic(records_1d):
    a = make_batch(records_1d, (1, 3), np.random.default_rng(4), n_queries=4, query_sampler=sample_query_locations)
    b = make_batch(records_1d, (1, 3), np.random.default_rng(4), n_queries=4, query_sampler=sample_query_locations)
    assert torch.equal(a.context.states, b.context.states)
    assert torch.equal(a.queries, b.queries)


def test_relative_boundary_distance():
    box = BoundingBox(np.array([0.0, 0.0]), np.array([10.0, 2.0]))
    pts = np.array([[5.0, 1.0], [0.0, 1.0], [5.0, 1.8]])
    np.testing.assert_allclose(relative_boundary_distance(pts, box), [0.5, 0.0, 0.1])


def test_boundary_statistics_tables(records_1d):
    stats = boundary_statistics(records_1d, n_bins=5)
    assert stats.dimension == 1
    assert stats.n_records == len(records_1d)
    assert int(stats.counts.sum()) == sum(len(r.vf_targets) for r in records_1d)
    assert "d=1" in stats.to_table()
    data = stats.to_plot_data()
    assert data["kind"] == "boundary_statistics"
    assert len(data["edges"]) == 6
    assert set(data["quantiles"]) == {"q05", "q25", "q75", "q95"}


def test_boundary_statistics_rejects_mixed_or_empty(records_1d, records_2d):
    with pytest.raises(OdeInfValidationError):
        boundary_statistics([])
    with pytest.raises(OdeInfValidationError):
        boundary_statistics(records_1d + records_2d)
