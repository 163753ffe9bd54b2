"""CLI, orquestrador e mini apps de ponta a ponta."""

import json
from pathlib import Path

import numpy as np
import pytest

from apps.common import read_context_file, read_queries
from core.base_app import EXIT_CONFIG, EXIT_IO, EXIT_OK
from core.exceptions import OdeInfIOError, OdeInfValidationError
from core.io_utils import sha256_file
from main import PRESETS, main
from odeinf.inference_model import MODEL_PRESETS

ROOT = Path(__file__).resolve().parent.parent
TINY = str(ROOT / "config" / "tiny_config.json")
EXPECTED_APPS = {"generate", "stats", "train", "finetune", "infer", "eval", "bench-vdp-fhn", "plot"}


def run_cli(*args, out):
    return main([*args, "--out", str(out), "--base-dir", str(ROOT)])


def test_list(tmp_path, capsys):
    assert run_cli("list", out=tmp_path) == EXIT_OK
    printed = capsys.readouterr().out
    for name in EXPECTED_APPS:
        assert f"\n{name} v" in printed


def test_global_flags_accepted_before_or_after_subcommand(tmp_path, capsys):
    assert main(["--preset", "paper", "list", "--out", str(tmp_path), "--base-dir", str(ROOT)]) == EXIT_OK
    assert run_cli("list", "--preset", "paper", out=tmp_path) == EXIT_OK
    assert "generate v" in capsys.readouterr().out


def test_cli_presets_match_model_presets():
    assert set(PRESETS) == set(MODEL_PRESETS)


def test_unknown_config_key_exits_with_config_code(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"training": {"lrr": 1}}), encoding="utf-8")
    assert run_cli("generate", "--config", str(cfg), out=tmp_path / "out") == EXIT_CONFIG
    assert not (tmp_path / "out" / "dataset").exists()


def test_missing_checkpoint_exits_with_io_code(tmp_path):
    code = run_cli("eval", "--config", TINY, "--checkpoint", str(tmp_path / "nope.ckpt"), out=tmp_path)
    assert code == EXIT_IO


def test_plot_rejects_empty_plot_data_before_writing(tmp_path):
    data = tmp_path / "plot_data.json"
    data.write_text(json.dumps({"entries": []}), encoding="utf-8")
    out = tmp_path / "out"
    assert run_cli("plot", "--plot-data", str(data), out=out) == EXIT_CONFIG
    assert not (out / "plots").exists()


def test_text_context_file(tmp_path):
    path = tmp_path / "ctx.csv"
    path.write_text("# t,x1,x2\n0.0,1.0,0.0\n0.1,0.9,0.1\n0.2,0.8,0.2\n\n"
                    "0.0,-1.0,0.5\n0.3,-0.9,0.4\n0.6,-0.7,0.3\n0.9,-0.5,0.2\n", encoding="utf-8")
    ctx = read_context_file(path)
    assert [len(c) for c in ctx] == [3, 4]
    assert all(c.dimension == 2 for c in ctx)
    np.testing.assert_array_equal(ctx[1].times, [0.0, 0.3, 0.6, 0.9])


def test_context_file_errors(tmp_path):
    mixed = tmp_path / "mixed.csv"
    mixed.write_text("0,1\n1,2\n2,3\n\n0,1,2\n1,2,3\n2,3,4\n", encoding="utf-8")
    with pytest.raises(OdeInfValidationError):
        read_context_file(mixed)
    empty = tmp_path / "empty.csv"
    empty.write_text("# nada\n", encoding="utf-8")
    with pytest.raises(OdeInfValidationError):
        read_context_file(empty)
    with pytest.raises(OdeInfIOError, match="missing.csv"):
        read_context_file(tmp_path / "missing.csv")


def test_query_file_dimension_is_checked(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("0.0,1.0\n2.0,3.0\n", encoding="utf-8")
    assert read_queries(path, 2).shape == (2, 2)
    with pytest.raises(OdeInfValidationError):
        read_queries(path, 1)


@pytest.mark.slow
def test_tiny_workflow_end_to_end(tmp_path):
    out = tmp_path / "wf"
    code = run_cli("workflow", str(ROOT / "config" / "example_workflow.json"), out=out)
    assert code == EXIT_OK

    for sub in ("dataset", "stats", "train", "eval", "plots"):
        assert (out / sub / "run_config.json").exists()
    assert (out / "dataset" / "stats").is_dir()
    assert (out / "logs" / "train.log").exists()
    metrics = (out / "train" / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(metrics) == 50
    assert (out / "train" / "checkpoints" / "last.ckpt").exists()
    assert (out / "eval" / "report.json").exists()
    assert list((out / "plots").glob("*.svg"))

    ctx = tmp_path / "ctx.csv"
    times = np.linspace(0.0, 2.0, 21)
    ctx.write_text("\n".join(f"{t},{np.exp(-t)}" for t in times) + "\n", encoding="utf-8")
    code = run_cli("infer", "--config", TINY, "--checkpoint", str(out / "train" / "checkpoints" / "last.ckpt"),
                   "--context", str(ctx), out=out)
    assert code == EXIT_OK
    rows = (out / "infer" / "field.csv").read_text(encoding="utf-8").splitlines()
    assert rows[0] == "x1,f1,log_var"
    assert len(rows) == 1 + 101


@pytest.mark.slow
def test_generate_and_train_are_reproducible(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run_cli("generate", "--config", TINY, "--seed", "11", out=out) == EXIT_OK
        assert run_cli("train", "--config", TINY, "--seed", "11", "--dataset", str(out / "dataset"),
                       out=out) == EXIT_OK
    a, b = outs
    shards_a = sorted((a / "dataset").glob("*.shard"))
    assert shards_a
    for shard in shards_a:
        assert sha256_file(shard) == sha256_file(b / "dataset" / shard.name)
    assert (a / "dataset" / "manifest.json").read_bytes() == (b / "dataset" / "manifest.json").read_bytes()
    assert (a / "train" / "metrics.jsonl").read_bytes() == (b / "train" / "metrics.jsonl").read_bytes()


@pytest.mark.slow
def test_finetune_and_benchmarks_from_checkpoint(tmp_path):
    out = tmp_path / "run"
    assert run_cli("generate", "--config", TINY, out=out) == EXIT_OK
    assert run_cli("train", "--config", TINY, "--dataset", str(out / "dataset"), out=out) == EXIT_OK
    ckpt = str(out / "train" / "checkpoints" / "last.ckpt")

    ctx = tmp_path / "ctx.csv"
    ctx.write_text("\n".join(f"{t},{1.0 / (1.0 + t)}" for t in np.linspace(0.0, 3.0, 31)) + "\n",
                   encoding="utf-8")
    assert run_cli("finetune", "--config", TINY, "--checkpoint", ckpt, "--context", str(ctx), out=out) == EXIT_OK
    selection = (out / "finetune" / "selection.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(selection) == 6
    assert (out / "finetune" / "finetuned.ckpt").exists()

    assert run_cli("bench-vdp-fhn", "--config", TINY, "--checkpoint", ckpt, out=out) == EXIT_OK
    suite = json.loads((out / "bench" / "suite_report.json").read_text(encoding="utf-8"))
    assert len(suite["trials"]) == 2 * 2
    assert set(suite["summary"]) == {"vdp_task1", "fhn"}
