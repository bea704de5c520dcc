import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

from .blood import VolumeKind, example_market
from .errors import ConfigError, SqviError
from .experiments import EMIT_OPTIONS, RUN_MODES, ExperimentConfig, rate_study, run
from .market_file import dump_market, load_json
from .settings import SqviSettings, SettingsStore

logger = logging.getLogger(__name__)

PROBLEM_HELP = "example1, example2, synthetic or file:<market.json>"


def _add_experiment_args(parser: argparse.ArgumentParser, *, with_mode: bool) -> None:
    parser.add_argument("--workspace", default=".")
    parser.add_argument("--config", default=None, help="Experiment config JSON")
    parser.add_argument("--problem", default=None, help=PROBLEM_HELP)
    if with_mode:
        parser.add_argument("--mode", choices=list(RUN_MODES), default=None)
    parser.add_argument("--rho", type=float, default=None)
    parser.add_argument("--eta", default=None, help="Step size or 'auto'")
    parser.add_argument("--alpha", type=float, default=None, help="Relaxation alpha_bar")
    parser.add_argument("--horizon", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--replications", type=int, default=None)
    parser.add_argument("--parallel", type=int, default=None, help="Replications run concurrently")
    parser.add_argument("--workers", type=int, default=None, help="Threads per batch average")
    parser.add_argument("--batch-cap", type=int, default=None, help="0 disables")
    parser.add_argument("--budget-cap", type=int, default=None, help="0 disables")
    parser.add_argument("--residual-tol", type=float, default=None)
    parser.add_argument("--residual-every", type=int, default=None)
    parser.add_argument("--sampling", choices=["stochastic", "mean"], default=None)
    parser.add_argument("--warm-start", choices=["previous", "box"], default=None)
    parser.add_argument("--constants", choices=["auto", "none"], default=None)
    parser.add_argument("--emit", default=None, help=f"Comma list of {', '.join(EMIT_OPTIONS)}")
    parser.add_argument("--shared-noise", action="store_true", default=None)
    parser.add_argument("--no-reference-run", dest="reference_run", action="store_false", default=None)
    parser.add_argument("--dim", type=int, default=None, help="Synthetic dimension")
    parser.add_argument("--mu", type=float, default=None, help="Synthetic mu")
    parser.add_argument("--lipschitz", type=float, default=None, help="Synthetic L")
    parser.add_argument("--nu", type=float, default=None, help="Synthetic noise level")
    parser.add_argument("--synthetic-seed", type=int, default=None)


def build_parser(defaults: SqviSettings) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqvi")
    parser.add_argument("--verbose", "-v", action="store_true", help="INFO-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run an experiment in one or both modes")
    _add_experiment_args(run_p, with_mode=True)

    rate = sub.add_parser("rate-study", help="Tabulate mean error against the theoretical bound")
    _add_experiment_args(rate, with_mode=True)
    rate.add_argument("--horizons", default=None, help="Comma list of horizons T")

    compare = sub.add_parser("compare", help="Run exact and inexact modes and compare them")
    _add_experiment_args(compare, with_mode=False)

    problem = sub.add_parser("problem", help="Export a built-in market as an editable JSON file")
    problem.add_argument("--problem", choices=["example1", "example2"], required=True)
    problem.add_argument("--out", required=True)

    status = sub.add_parser("status", help="Show stored defaults")
    status.add_argument("--workspace", default=".")

    config = sub.add_parser("config", help="Show or update stored defaults")
    config.add_argument("--workspace", default=".")
    config.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help=f"Update a default ({', '.join(defaults.to_dict())})",
    )
    return parser


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _split(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _settings_layer(settings: SqviSettings) -> dict[str, Any]:
    return {
        "solver": {
            "rho": settings.rho,
            "alpha_bar": settings.alpha_bar,
            "horizon": settings.horizon,
            "seed": settings.seed,
            "budget_cap": settings.budget_cap or None,
            "batch_cap": settings.batch_cap or None,
            "workers": settings.workers,
            "residual_every": settings.residual_every,
        },
        "out": settings.out,
    }


def _flag_layer(args: argparse.Namespace) -> dict[str, Any]:
    solver_flags = {
        "mode": getattr(args, "mode", None),
        "rho": args.rho,
        "eta": args.eta if args.eta in (None, "auto") else _float_flag(args.eta, "--eta"),
        "alpha_bar": args.alpha,
        "horizon": args.horizon,
        "seed": args.seed,
        "workers": args.workers,
        "residual_tol": args.residual_tol,
        "residual_every": args.residual_every,
        "sampling": args.sampling,
        "warm_start": args.warm_start,
        "constants": args.constants,
    }
    solver = {k: v for k, v in solver_flags.items() if v is not None}
    for key in ("batch_cap", "budget_cap"):
        value = getattr(args, key)
        if value is not None:
            solver[key] = value or None
    top = {
        "problem": args.problem,
        "out": args.out,
        "replications": args.replications,
        "parallel": args.parallel,
        "shared_noise": args.shared_noise,
        "reference_run": args.reference_run,
        "emit": None if args.emit is None else _split(args.emit),
        "horizons": None if getattr(args, "horizons", None) is None else [
            int(_float_flag(h, "--horizons")) for h in _split(args.horizons)
        ],
    }
    layer: dict[str, Any] = {k: v for k, v in top.items() if v is not None}
    synthetic = {
        "dim": args.dim,
        "mu": args.mu,
        "lipschitz": args.lipschitz,
        "nu": args.nu,
        "seed": args.synthetic_seed,
    }
    synthetic = {k: v for k, v in synthetic.items() if v is not None}
    if solver:
        layer["solver"] = solver
    if synthetic:
        layer["synthetic"] = synthetic
    return layer


def _float_flag(raw: str, flag: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{flag} expects a number, got {raw!r}", field=flag) from exc


def resolve_experiment(args: argparse.Namespace, settings: SqviSettings) -> ExperimentConfig:
    """Stored defaults, then the --config file, then explicit flags."""
    data = _settings_layer(settings)
    if args.config:
        file_data = load_json(args.config)
        if not isinstance(file_data, dict):
            raise ConfigError("experiment config must be a JSON object", field=args.config)
        data = _merge(data, file_data)
    data = _merge(data, _flag_layer(args))
    return ExperimentConfig.from_dict(data)


def run_experiment(cfg: ExperimentConfig) -> int:
    report = run(cfg)
    payload = {
        "problem": report.problem,
        "out": str(Path(cfg.out).resolve()),
        "modes": {
            name: {
                "final_x": summary.final_x,
                "final_utilities": summary.final_utilities,
                "natural_residual": summary.natural_residual,
                "wall_time_s": summary.wall_time_s,
            }
            for name, summary in report.modes.items()
        },
        "comparison": report.comparison,
    }
    print(json.dumps(payload, ensure_ascii=True, indent=2))
    return 0


def run_rate_study(cfg: ExperimentConfig) -> int:
    rows = rate_study(cfg)
    payload = {
        "out": str((Path(cfg.out) / "rate_study.csv").resolve()),
        "rows": [{"T": r.horizon, "mean_err": r.mean_error, "bound": r.bound} for r in rows],
    }
    print(json.dumps(payload, ensure_ascii=True, indent=2))
    return 0


def run_problem_export(name: str, out: str) -> int:
    kind = VolumeKind.AFFINE if name == "example1" else VolumeKind.SQRT_AFFINE
    path = dump_market(example_market(kind), out)
    print(json.dumps({"written": str(path.resolve())}, ensure_ascii=True, indent=2))
    return 0


def run_status(workspace: str) -> int:
    store = SettingsStore(workspace)
    settings = store.load()
    payload = {
        "workspace": str(Path(workspace).resolve()),
        "config_path": str(store.path),
        "config_exists": store.path.exists(),
        **settings.to_dict(),
        "problems": ["example1", "example2", "synthetic", "file:<path>"],
        "emit_options": list(EMIT_OPTIONS),
    }
    print(json.dumps(payload, ensure_ascii=True, indent=2))
    return 0


def run_config(args: argparse.Namespace) -> int:
    store = SettingsStore(args.workspace)
    settings = store.load()
    changed = False
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}", field="--set")
        settings.update(key.strip(), value.strip())
        changed = True
    if changed:
        store.save(settings)
    print(
        json.dumps(
            {"updated": changed, "config_path": str(store.path), **settings.to_dict()},
            ensure_ascii=True,
            indent=2,
        )
    )
    return 0


def _dispatch(args: argparse.Namespace, settings: SqviSettings) -> int:
    if args.command == "run":
        return run_experiment(resolve_experiment(args, settings))
    if args.command == "compare":
        cfg = resolve_experiment(args, settings).with_changes(mode="both")
        return run_experiment(cfg)
    if args.command == "rate-study":
        return run_rate_study(resolve_experiment(args, settings))
    if args.command == "problem":
        return run_problem_export(args.problem, args.out)
    if args.command == "status":
        return run_status(args.workspace)
    return run_config(args)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser(SqviSettings())
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = SettingsStore(getattr(args, "workspace", os.getcwd())).load()
        return _dispatch(args, settings)
    except SqviError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
