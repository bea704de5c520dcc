import json

import pytest

from vr_sqvi.blood import VolumeKind
from vr_sqvi.cli import build_parser, main, resolve_experiment
from vr_sqvi.errors import ConfigError
from vr_sqvi.market_file import dump_market, load_market
from vr_sqvi.settings import SettingsStore, SqviSettings


def _run_args(tmp_path, *extra):
    return [
        "run",
        "--workspace", str(tmp_path),
        "--out", str(tmp_path / "out"),
        "--sampling", "mean",
        "--constants", "none",
        *extra,
    ]


def test_run_prints_summary(tmp_path, capsys):
    code = main(_run_args(tmp_path, "--problem", "example1", "--mode", "exact", "--eta", "0.0125",
                          "--horizon", "5", "--emit", "summary_json"))
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["problem"] == "example1"
    assert list(payload["modes"]) == ["exact"]
    assert (tmp_path / "out" / "summary.json").exists()


def test_compare_runs_both_modes(tmp_path, capsys):
    code = main([
        "compare", "--workspace", str(tmp_path), "--out", str(tmp_path / "out"), "--problem", "example1",
        "--sampling", "mean", "--constants", "none", "--eta", "0.0125", "--horizon", "5",
        "--emit", "summary_json",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert sorted(payload["modes"]) == ["exact", "inexact"]
    assert payload["comparison"]["final_point_distance"] >= 0.0


def test_invalid_config_json_exits_2(tmp_path, capsys):
    config = tmp_path / "experiment.json"
    config.write_text('{\n  "problem": "example1",\n  "solver": {\n}\n', encoding="utf-8")
    code = main(_run_args(tmp_path, "--config", str(config)))
    assert code == 2
    assert "line=" in capsys.readouterr().err


def test_unknown_emit_exits_2(tmp_path):
    assert main(_run_args(tmp_path, "--eta", "0.01", "--emit", "summary_json,pdf")) == 2


def test_empty_moving_set_exits_4(tmp_path, example1_market):
    path = dump_market(example1_market.with_floors([100000.0, 1100.0]), tmp_path / "market.json")
    code = main(_run_args(tmp_path, "--problem", f"file:{path}", "--mode", "exact", "--eta", "0.01"))
    assert code == 4


def test_schedule_overflow_exits_3(tmp_path, capsys):
    code = main(_run_args(tmp_path, "--problem", "synthetic", "--mode", "exact", "--rho", "0.5",
                          "--horizon", "100", "--eta", "0.1", "--emit", "summary_json"))
    assert code == 3
    assert capsys.readouterr().err


def test_synthetic_run_with_default_settings(tmp_path, capsys):
    code = main([
        "run", "--workspace", str(tmp_path), "--out", str(tmp_path / "out"), "--problem", "synthetic",
        "--horizon", "60", "--emit", "summary_json",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["modes"]["inexact"]["residual_target"] > 0.0
    assert payload["config"]["resolved_eta"] == pytest.approx(0.01)


def test_rate_study_command(tmp_path, capsys):
    code = main([
        "rate-study", "--workspace", str(tmp_path), "--out", str(tmp_path / "out"), "--problem", "synthetic",
        "--mode", "exact", "--sampling", "mean", "--eta", "0.25", "--dim", "3", "--mu", "1",
        "--lipschitz", "2", "--nu", "0", "--horizons", "5,10",
    ])
    assert code == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert [r["T"] for r in rows] == [5, 10]
    assert all(r["mean_err"] <= r["bound"] for r in rows)


def test_problem_export(tmp_path):
    out = tmp_path / "example2.json"
    assert main(["problem", "--problem", "example2", "--out", str(out)]) == 0
    assert load_market(out).volume_kind is VolumeKind.SQRT_AFFINE


def test_config_and_status(tmp_path, capsys):
    assert main(["config", "--workspace", str(tmp_path), "--set", "horizon=7", "--set", "rho=0.9"]) == 0
    capsys.readouterr()
    assert main(["status", "--workspace", str(tmp_path)]) == 0
    status = json.loads(capsys.readouterr().out)
    assert status["config_exists"]
    assert status["horizon"] == 7
    assert status["rho"] == 0.9
    assert main(["config", "--workspace", str(tmp_path), "--set", "colour=blue"]) == 2
    assert main(["config", "--workspace", str(tmp_path), "--set", "horizon"]) == 2


def test_layer_precedence(tmp_path):
    store = SettingsStore(str(tmp_path))
    settings = SqviSettings(horizon=7, budget_cap=50)
    store.save(settings)
    parser = build_parser(SqviSettings())
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"solver": {"horizon": 9}}), encoding="utf-8")

    stored = resolve_experiment(parser.parse_args(["run"]), store.load())
    assert stored.horizon == 7
    assert stored.budget_cap == 50
    from_file = resolve_experiment(parser.parse_args(["run", "--config", str(config)]), store.load())
    assert from_file.horizon == 9
    flagged = resolve_experiment(
        parser.parse_args(["run", "--config", str(config), "--horizon", "11", "--budget-cap", "0"]),
        store.load(),
    )
    assert flagged.horizon == 11
    assert flagged.budget_cap is None


def test_eta_flag_must_be_numeric(tmp_path):
    parser = build_parser(SqviSettings())
    with pytest.raises(ConfigError) as info:
        resolve_experiment(parser.parse_args(["run", "--eta", "small"]), SqviSettings())
    assert info.value.field == "--eta"


def test_missing_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2
