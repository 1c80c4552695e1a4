"""Tests for the sweep driver at miniature scale."""

import json
import os

import pytest

from spur.config import parse_config_text, resolve_config
from spur.errors import ConfigurationError
from spur.sweep import (
    CSV_HEADER,
    cell_config,
    parse_method_token,
    run_dir_name,
    sweep_compare,
    sweep_failed,
    table_csv_lines,
    write_table_csv,
)
from spur.training import Method, generate_dataset, train

MINI = """
model.layers = 1
model.hidden_dim = 8
model.ffn_dim = 16
model.vocab = 10
model.max_seq = 6
task.n = 32
task.length = 4
task.vocab = 8
schedule.total_steps = 12
schedule.t_i = 0
schedule.ramp_steps = 12
schedule.cadence = 4
lambda_schedule.t_i = 0
lambda_schedule.ramp_steps = 12
eval_every = 6
batch_size = 8
"""


def mini_base():
    return resolve_config(parse_config_text(MINI))


# ----- token and cell plumbing -----


def test_parse_method_token():
    assert parse_method_token("imp") == (Method.IMP, None, "imp")
    assert parse_method_token(" IMP_SPUR ") == (Method.IMP_SPUR, None,
                                                "imp_spur")
    assert parse_method_token("imp_spur:100") == (Method.IMP_SPUR, 100.0,
                                                  "imp_spur:100")
    assert parse_method_token("imp_spur:2.5")[1] == 2.5


def test_parse_method_token_rejects_bad_tokens():
    with pytest.raises(ConfigurationError):
        parse_method_token("magnitude")
    with pytest.raises(ConfigurationError):
        parse_method_token("imp:5")
    with pytest.raises(ConfigurationError):
        parse_method_token("imp_spur:big")
    with pytest.raises(ConfigurationError):
        parse_method_token("imp_spur:-1")


def test_run_dir_name():
    assert run_dir_name(0.05, "imp", 3) == "d0.05_mimp_s3"
    assert run_dir_name(0.3, "imp_spur:100", 0) == "d0.3_mimp_spur-100_s0"


def test_cell_config_sets_density_method_and_seed():
    base = mini_base()
    cfg = cell_config(base, 0.25, "imp", 7)
    assert cfg.method is Method.IMP
    assert cfg.schedule.v_final == 0.25
    assert cfg.lambda_schedule.lambda_final == 0.0
    assert cfg.seed == 7
    assert cfg.model.seed == 7

    cfg = cell_config(base, 0.25, "imp_spur", 7)
    assert cfg.lambda_schedule.lambda_final == \
        base.lambda_schedule.lambda_final

    cfg = cell_config(base, 0.25, "imp_spur:100", 7)
    assert cfg.lambda_schedule.lambda_final == 100.0


# ----- aggregation (simulated outcomes) -----


def fake_outcomes(mapping):
    def runner(args):
        _, _, density, token, seed = args
        return mapping[(density, token, seed)]
    return runner


def test_failed_cell_marking_and_missing_baseline(monkeypatch, tmp_path):
    import spur.sweep as sweep_mod
    mapping = {
        (0.5, "imp", 0): ("ok", 0.8),
        (0.5, "imp", 1): ("ok", 0.9),
        (0.5, "imp_spur", 0): ("ok", 0.95),
        (0.5, "imp_spur", 1): ("ok", 0.85),
        (0.25, "imp", 0): ("aborted", "non-finite loss at step 3"),
        (0.25, "imp", 1): ("ok", 0.7),
        (0.25, "imp_spur", 0): ("ok", 0.75),
        (0.25, "imp_spur", 1): ("ok", 0.65),
    }
    monkeypatch.setattr(sweep_mod, "_run_cell", fake_outcomes(mapping))
    rows = sweep_compare(mini_base(), [0.5, 0.25], ["imp", "imp_spur"],
                         [0, 1], str(tmp_path))
    assert [r["method"] for r in rows] == ["imp", "imp_spur"] * 2
    top_imp, top_spur, low_imp, low_spur = rows
    assert top_imp["mean_acc"] == pytest.approx(0.85)
    assert top_imp["std_acc"] == pytest.approx(0.05)
    assert top_imp["gap"] == 0.0
    assert top_spur["gap"] == pytest.approx(0.05)
    assert low_imp["mean_acc"] == "failed"
    assert low_imp["std_acc"] == "failed"
    assert low_imp["gap"] == "failed"
    assert low_spur["mean_acc"] == pytest.approx(0.70)
    assert low_spur["gap"] == ""
    assert sweep_failed(rows)
    assert not sweep_failed(rows[:2])


def test_sweep_rejects_empty_and_duplicate_grids(tmp_path):
    base = mini_base()
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [], ["imp"], [0], str(tmp_path))
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [0.5], [], [0], str(tmp_path))
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [0.5], ["imp"], [], str(tmp_path))
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [0.5, 0.5], ["imp"], [0], str(tmp_path))
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [0.5], ["imp", "imp"], [0], str(tmp_path))
    with pytest.raises(ConfigurationError):
        sweep_compare(base, [0.5], ["imp"], [0, 0], str(tmp_path))


def test_thread_count_comes_from_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SPUR_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        sweep_compare(mini_base(), [0.5], ["imp"], [0], str(tmp_path))
    monkeypatch.setenv("SPUR_THREADS", "0")
    with pytest.raises(ConfigurationError):
        sweep_compare(mini_base(), [0.5], ["imp"], [0], str(tmp_path))


# ----- real miniature sweeps -----


def test_singleton_sweep_equals_the_run_final_accuracy(tmp_path):
    base = mini_base()
    rows = sweep_compare(base, [0.5], ["imp"], [3], str(tmp_path))
    assert len(rows) == 1
    cfg = cell_config(base, 0.5, "imp", 3)
    record = train(cfg, generate_dataset(cfg))
    assert rows[0]["mean_acc"] == record.rows[-1]["test_accuracy"]
    assert rows[0]["std_acc"] == 0.0
    assert rows[0]["gap"] == 0.0
    assert rows[0]["seed_count"] == 1


def test_sweep_persists_run_directories(tmp_path):
    rows = sweep_compare(mini_base(), [0.5], ["imp", "imp_spur"], [0],
                         str(tmp_path))
    assert not sweep_failed(rows)
    for name in ("d0.5_mimp_s0", "d0.5_mimp_spur_s0"):
        run_dir = tmp_path / name
        files = sorted(os.listdir(run_dir))
        assert files == ["config.echo", "masks.ckpt", "model.ckpt",
                         "run.jsonl"]
        last, final = (run_dir / "run.jsonl").read_text().splitlines()[-2:]
        assert json.loads(final) == {"final_masks": "masks.ckpt"}
        assert json.loads(last)["step"] == 12


def test_sweep_is_deterministic(tmp_path):
    base = mini_base()
    rows_a = sweep_compare(base, [0.5], ["imp_spur"], [0, 1],
                           str(tmp_path / "a"))
    rows_b = sweep_compare(base, [0.5], ["imp_spur"], [0, 1],
                           str(tmp_path / "b"))
    assert table_csv_lines(rows_a) == table_csv_lines(rows_b)
    for name in ("d0.5_mimp_spur_s0", "d0.5_mimp_spur_s1"):
        a = (tmp_path / "a" / name / "run.jsonl").read_bytes()
        b = (tmp_path / "b" / name / "run.jsonl").read_bytes()
        assert a == b


def test_worker_pool_matches_inline_execution(tmp_path):
    base = mini_base()
    inline = sweep_compare(base, [0.5], ["imp", "imp_spur"], [0],
                           str(tmp_path / "inline"), threads=1)
    pooled = sweep_compare(base, [0.5], ["imp", "imp_spur"], [0],
                           str(tmp_path / "pooled"), threads=2)
    assert table_csv_lines(inline) == table_csv_lines(pooled)
    a = (tmp_path / "inline" / "d0.5_mimp_s0" / "run.jsonl").read_bytes()
    b = (tmp_path / "pooled" / "d0.5_mimp_s0" / "run.jsonl").read_bytes()
    assert a == b


def test_table_csv_layout(tmp_path):
    rows = sweep_compare(mini_base(), [0.5], ["imp"], [0], str(tmp_path))
    lines = table_csv_lines(rows)
    assert lines[0] == CSV_HEADER
    assert len(lines) == 2
    fields = lines[1].split(",")
    assert fields[0] == "0.5"
    assert fields[1] == "imp"
    assert fields[2] == "spur"
    assert fields[3] == "all"
    assert fields[4] == "1"
    path = tmp_path / "table.csv"
    write_table_csv(path, rows)
    assert path.read_text() == "\n".join(lines) + "\n"
