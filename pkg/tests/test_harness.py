"""Driver-level tests: JSON config parsing, sweep execution, CSV
persistence, plotting, and the command line."""

import json
import os

import numpy as np
import pytest

from privsweep.cli import main
from privsweep.errors import ConfigurationError, EmptyReportError, FormatError
from privsweep.harness import (
    DEFAULT_EPSILON_GRID,
    OUTPUT_DIR_ENV,
    RESULTS_HEADER,
    ExperimentConfig,
    MetricRow,
    RunMeta,
    SweepResult,
    config_from_json,
    default_output_dir,
    read_results,
    run_sweep,
    write_results,
)
from privsweep.dataset import SyntheticSpec, load_csv
from privsweep.learners import TrainConfig
from privsweep.plots import emit_plots, summary_table

TINY_CONFIG = {
    "name": "tiny",
    "dataset": {
        "kind": "synthetic",
        "n": 200,
        "input_dim": 4,
        "class_count": 2,
        "class_separation": 4.0,
        "seed": 9,
    },
    "arch": "lr",
    "mechanisms": ["gradient", "output"],
    "epsilons": [1.0, 100.0],
    "seeds": [0, 1],
    "train": {"epochs": 5, "batch_size": 64},
}


@pytest.fixture(scope="module")
def tiny_result():
    config = config_from_json(json.dumps(TINY_CONFIG))
    return run_sweep(config)


# ----------------------------------------------------------------------
# config parsing

def test_config_happy_path():
    raw = dict(TINY_CONFIG)
    raw.update(
        {
            "hidden": [16, 8],
            "delta": 0.2,
            "clip_norm": 0.5,
            "c2": 2.0,
            "teachers": 6,
            "lipschitz": 3.0,
            "normalize": False,
        }
    )
    cfg = config_from_json(json.dumps(raw))
    assert cfg.arch == "lr"
    assert cfg.mechanisms == ("gradient", "output")
    assert cfg.synthetic == SyntheticSpec(200, 4, 2, 4.0, 9)
    assert cfg.epsilons == (1.0, 100.0)
    assert cfg.seeds == (0, 1)
    assert cfg.train == TrainConfig(epochs=5, batch_size=64)
    assert cfg.hidden == (16, 8)
    assert cfg.delta == 0.2
    assert cfg.clip_norm == 0.5
    assert cfg.c2 == 2.0
    assert cfg.teachers == 6
    assert cfg.lipschitz == 3.0
    assert cfg.normalize is False


def test_config_defaults():
    raw = {k: v for k, v in TINY_CONFIG.items() if k in ("dataset", "arch", "mechanisms")}
    cfg = config_from_json(json.dumps(raw))
    assert cfg.epsilons == DEFAULT_EPSILON_GRID
    assert cfg.seeds == (0,)
    assert cfg.train == TrainConfig()
    assert cfg.delta is None
    assert cfg.teachers is None
    assert cfg.normalize is True


def _bad(mutator):
    raw = json.loads(json.dumps(TINY_CONFIG))
    mutator(raw)
    return json.dumps(raw)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown config key"):
        config_from_json(_bad(lambda r: r.__setitem__("epsilon", [1.0])))
    with pytest.raises(ConfigurationError, match="unknown synthetic dataset keys"):
        config_from_json(_bad(lambda r: r["dataset"].__setitem__("rows", 10)))
    with pytest.raises(ConfigurationError, match="unknown train key"):
        config_from_json(_bad(lambda r: r["train"].__setitem__("seed", 3)))


def test_config_rejects_bad_json_and_shape():
    with pytest.raises(FormatError):
        config_from_json("{not json")
    with pytest.raises(FormatError):
        config_from_json("[1, 2]")
    with pytest.raises(ConfigurationError, match="needs 'dataset'"):
        config_from_json(json.dumps({"arch": "lr"}))


def test_config_rejects_bad_mechanisms():
    with pytest.raises(ConfigurationError, match="unknown mechanism"):
        config_from_json(_bad(lambda r: r.__setitem__("mechanisms", ["laplace"])))
    with pytest.raises(ConfigurationError, match="duplicates"):
        config_from_json(
            _bad(lambda r: r.__setitem__("mechanisms", ["gradient", "gradient"]))
        )
    with pytest.raises(ConfigurationError, match="linear model only"):
        config_from_json(
            _bad(
                lambda r: (
                    r.__setitem__("arch", "mlp"),
                    r.__setitem__("mechanisms", ["objective"]),
                )
            )
        )


def test_config_rejects_bad_grid_and_delta():
    with pytest.raises(ConfigurationError, match="outside the supported grid"):
        config_from_json(_bad(lambda r: r.__setitem__("epsilons", [1e-3])))
    with pytest.raises(ConfigurationError, match="outside the supported grid"):
        config_from_json(_bad(lambda r: r.__setitem__("epsilons", [1e5])))
    with pytest.raises(ConfigurationError, match="delta"):
        config_from_json(_bad(lambda r: r.__setitem__("delta", 1.5)))


def test_config_rejects_bad_dataset_source():
    with pytest.raises(ConfigurationError, match="kind"):
        config_from_json(_bad(lambda r: r.__setitem__("dataset", {"n": 5})))
    with pytest.raises(ConfigurationError, match="'synthetic' or 'csv'"):
        config_from_json(_bad(lambda r: r["dataset"].__setitem__("kind", "parquet")))
    # csv without class_count
    with pytest.raises(ConfigurationError, match="class_count"):
        config_from_json(
            _bad(lambda r: r.__setitem__("dataset", {"kind": "csv", "path": "x.csv"}))
        )


def test_config_source_exclusivity():
    with pytest.raises(ConfigurationError, match="exactly one dataset source"):
        ExperimentConfig(arch="lr", mechanisms=("gradient",))


# ----------------------------------------------------------------------
# sweep execution

def test_sweep_row_grid(tiny_result):
    rows = tiny_result.rows
    assert len(rows) == 2 * 2 * 2  # mechanisms x epsilons x seeds
    assert all(r.status == "ok" for r in rows)
    combos = {(r.mechanism, r.epsilon, r.seed) for r in rows}
    assert combos == {
        (m, e, s) for m in ("gradient", "output") for e in (1.0, 100.0) for s in (0, 1)
    }
    for r in rows:
        assert 0.0 <= r.acc_private <= 1.0
        assert 0.0 <= r.acc_nonprivate <= 1.0
        assert r.n_members == 50  # quarter of 200
        assert abs(r.privacy_leakage - (r.tpr - r.fpr)) < 1e-12


def test_sweep_is_deterministic(tiny_result):
    config = config_from_json(json.dumps(TINY_CONFIG))
    again = run_sweep(config)
    assert again.rows == tiny_result.rows


def test_sweep_failed_cells_do_not_stop_the_run():
    # default delta for a 50-row train split is 1e-3, far below the 16/50
    # feasibility gate of the linear-model input formula, so every input
    # cell fails while gradient cells keep going
    raw = json.loads(json.dumps(TINY_CONFIG))
    raw["mechanisms"] = ["input", "gradient"]
    raw["epsilons"] = [1.0]
    raw["seeds"] = [0]
    result = run_sweep(config_from_json(json.dumps(raw)))
    by_mech = {r.mechanism: r for r in result.rows}
    assert by_mech["input"].status == "failed"
    assert by_mech["input"].utility_loss is None
    assert by_mech["input"].true_revealed is None
    assert by_mech["gradient"].status == "ok"


def test_sweep_progress_lines():
    raw = json.loads(json.dumps(TINY_CONFIG))
    raw["mechanisms"] = ["gradient"]
    raw["epsilons"] = [1.0]
    raw["seeds"] = [0]
    seen = []
    run_sweep(config_from_json(json.dumps(raw)), progress=seen.append)
    assert any("baseline accuracy" in line for line in seen)
    assert any("attack forest" in line for line in seen)


def test_model_sink_sees_every_ok_cell(tiny_result):
    config = config_from_json(json.dumps(TINY_CONFIG))
    calls = []
    run_sweep(config, model_sink=lambda m, mech, eps, seed: calls.append((m.kind, mech, eps, seed)))
    assert len(calls) == len(tiny_result.rows)
    assert all(kind == mech for kind, mech, _, _ in calls)


# ----------------------------------------------------------------------
# persistence

def test_write_read_round_trip(tiny_result, tmp_path):
    out = str(tmp_path / "out")
    csv_path = write_results(tiny_result, out)
    assert csv_path == os.path.join(out, "results.csv")
    back = read_results(out)
    assert back.rows == tiny_result.rows
    assert back.meta.dataset == tiny_result.meta.dataset
    assert back.meta.version == tiny_result.meta.version


def test_written_csv_bytes_are_stable(tiny_result, tmp_path):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    write_results(tiny_result, a)
    write_results(tiny_result, b)
    with open(os.path.join(a, "results.csv"), "rb") as fh:
        bytes_a = fh.read()
    with open(os.path.join(b, "results.csv"), "rb") as fh:
        bytes_b = fh.read()
    assert bytes_a == bytes_b
    assert bytes_a.startswith(RESULTS_HEADER.encode())


def test_read_results_rejects_tampered_header(tiny_result, tmp_path):
    out = str(tmp_path / "out")
    write_results(tiny_result, out)
    path = os.path.join(out, "results.csv")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines[0] = lines[0].replace("utility_loss", "utility")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="header mismatch"):
        read_results(out)


def test_read_results_rejects_short_row(tiny_result, tmp_path):
    out = str(tmp_path / "out")
    write_results(tiny_result, out)
    path = os.path.join(out, "results.csv")
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("too,few,fields\n")
    with pytest.raises(FormatError, match="malformed results row"):
        read_results(out)


def test_read_results_survives_missing_meta(tiny_result, tmp_path):
    out = str(tmp_path / "out")
    write_results(tiny_result, out)
    os.remove(os.path.join(out, "run_meta.json"))
    back = read_results(out)
    assert back.rows == tiny_result.rows
    assert back.meta.wall_time_s == 0.0


def test_default_output_dir_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert default_output_dir() == "privsweep-out"
    monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/elsewhere")
    assert default_output_dir() == "/tmp/elsewhere"


# ----------------------------------------------------------------------
# plots and summary

def test_emit_plots_outputs(tiny_result, tmp_path):
    out = str(tmp_path / "plots")
    written = emit_plots(tiny_result, out)
    svgs = [p for p in written if p.endswith(".svg")]
    csvs = [p for p in written if p.endswith(".csv")]
    assert len(svgs) == 3 and len(csvs) == 3
    for path in written:
        assert os.path.exists(path)
    # companion CSV numbers must equal seed means of the raw rows
    with open(os.path.join(out, "plot_utility_loss.csv"), encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "mechanism,epsilon,mean,stddev,n_seeds"
    for line in lines[1:]:
        mech, eps, mean, std, n = line.split(",")
        cell = [
            r.utility_loss
            for r in tiny_result.rows
            if r.mechanism == mech and r.epsilon == float(eps)
        ]
        assert int(n) == len(cell) == 2
        assert abs(float(mean) - np.mean(cell)) < 1e-12
        assert abs(float(std) - np.std(cell)) < 1e-12


def test_emit_plots_requires_an_ok_row(tmp_path):
    failed = MetricRow(
        dataset="d", arch="lr", mechanism="gradient", epsilon=1.0, seed=0,
        acc_nonprivate=None, acc_private=None, utility_loss=None,
        tpr=None, fpr=None, privacy_leakage=None, true_revealed=None,
        n_members=None, status="failed",
    )
    result = SweepResult(rows=[failed], meta=RunMeta("d", "lr", 0.0))
    with pytest.raises(EmptyReportError):
        emit_plots(result, str(tmp_path))


def test_summary_table_lines(tiny_result):
    text = summary_table(tiny_result)
    lines = text.splitlines()
    assert "arch=lr" in lines[0]
    # 2 mechanisms x 2 epsilons plus the two header lines
    assert len(lines) == 2 + 4
    assert any(line.startswith("gradient") for line in lines)
    assert any(line.startswith("output") for line in lines)


# ----------------------------------------------------------------------
# command line

def _write_cli_config(tmp_path) -> str:
    raw = json.loads(json.dumps(TINY_CONFIG))
    raw["mechanisms"] = ["gradient"]
    raw["epsilons"] = [1.0]
    raw["seeds"] = [0]
    path = str(tmp_path / "config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh)
    return path


def test_cli_synth_round_trip(tmp_path, capsys):
    out = str(tmp_path / "data.csv")
    code = main(
        ["synth", "--n", "40", "--input-dim", "3", "--classes", "2",
         "--separation", "3.0", "--seed", "4", "--out", out]
    )
    assert code == 0
    assert "wrote 40 rows" in capsys.readouterr().out
    ds = load_csv(out, label_column="label", class_count=2)
    assert ds.n == 40 and ds.input_dim == 3


def test_cli_sweep_report_and_attack(tmp_path, capsys):
    cfg_path = _write_cli_config(tmp_path)
    out_dir = str(tmp_path / "run")
    code = main(["sweep", cfg_path, "--out", out_dir, "--save-models", "--quiet"])
    assert code == 0
    assert "wrote 1 rows (1 ok)" in capsys.readouterr().out
    assert os.path.exists(os.path.join(out_dir, "results.csv"))
    assert os.path.exists(os.path.join(out_dir, "run_meta.json"))

    model_path = os.path.join(out_dir, "models", "gradient_eps1_seed0.json")
    assert os.path.exists(model_path)

    code = main(["attack", model_path, cfg_path])
    assert code == 0
    attack_out = capsys.readouterr().out
    assert "mechanism=gradient epsilon=1" in attack_out
    assert "privacy leakage" in attack_out

    code = main(["report", out_dir])
    assert code == 0
    report_out = capsys.readouterr().out
    assert "utility_loss.svg" in report_out
    for metric in ("utility_loss", "privacy_leakage", "true_revealed"):
        assert os.path.exists(os.path.join(out_dir, f"{metric}.svg"))
        assert os.path.exists(os.path.join(out_dir, f"plot_{metric}.csv"))


def test_cli_seed_override(tmp_path, capsys):
    cfg_path = _write_cli_config(tmp_path)
    out_dir = str(tmp_path / "run")
    code = main(["sweep", cfg_path, "--out", out_dir, "--seed", "5", "--quiet"])
    assert code == 0
    capsys.readouterr()
    back = read_results(out_dir)
    assert {r.seed for r in back.rows} == {5}


def test_cli_runtime_failure_exits_one(tmp_path, capsys):
    code = main(["sweep", str(tmp_path / "missing.json")])
    assert code == 1
    assert "privsweep:" in capsys.readouterr().err


def test_cli_bad_config_exits_one(tmp_path, capsys):
    path = str(tmp_path / "bad.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('{"arch": "lr"}')
    code = main(["sweep", path])
    assert code == 1
    assert "privsweep:" in capsys.readouterr().err


def test_cli_usage_error_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
    capsys.readouterr()
