"""Experiment runner behind the ``sqvi`` command.

An :class:`ExperimentConfig` names a problem (a built-in market, the
synthetic family or a market JSON file), the solver parameters and the
artifacts to emit. :func:`run` executes one or both solver modes over a
replication manifest and writes the trajectory/plot CSVs and the summary
JSON; :func:`rate_study` tabulates the empirical mean error against the
theoretical bound for increasing horizons.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .blood import BloodMarket, build_example1, build_example2, build_problem
from .config import ConstantsSource, Mode, Sampling, SolverConfig, StrongMonotonicityData, _integer, _number
from .errors import BoundViolationError, ConfigError
from .market_file import load_json, load_market
from .observability import Observability
from .problem import QviProblem, estimate_constants
from .reporting import (
    ModeSummary,
    RateRow,
    SummaryReport,
    compare_to_published,
    write_plotdata_csv,
    write_rate_csv,
    write_trajectory_csv,
)
from .solver import RunReport, solve
from .synthetic import make_synthetic
from .theory import (
    compute_beta,
    contraction_modulus,
    default_step_size,
    step_size_interval,
    theoretical_error_bound,
)

logger = logging.getLogger(__name__)

BUILTIN_PROBLEMS = ("example1", "example2", "synthetic")
EMIT_OPTIONS = ("trajectory_csv", "summary_json", "plotdata_csv", "events")
RUN_MODES = ("exact", "inexact", "both")
AGREEMENT_TOL = 1e-4
REFERENCE_HORIZON_FACTOR = 4
REFERENCE_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 10
    mu: float = 1.0
    lipschitz: float = 10.0
    nu: float = 1.0
    seed: int = 0

    @classmethod
    def from_dict(cls, data: Any) -> "SyntheticSpec":
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ConfigError("expected an object", field="synthetic")
        base = cls()
        return cls(
            dim=_integer(data, "dim", base.dim, "synthetic."),
            mu=_number(data, "mu", base.mu, "synthetic."),
            lipschitz=_number(data, "lipschitz", base.lipschitz, "synthetic."),
            nu=_number(data, "nu", base.nu, "synthetic."),
            seed=_integer(data, "seed", base.seed, "synthetic."),
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "example1"
    mode: str = "inexact"
    eta: float | None = None
    alpha_bar: float = 0.5
    rho: float = 0.95
    horizon: int = 100
    seed: int = 0
    constants: str | StrongMonotonicityData = "auto"
    batch_cap: int | None = None
    budget_cap: int | None = 1000
    residual_tol: float | None = None
    sampling: str = "stochastic"
    workers: int = 1
    residual_every: int = 1
    warm_start: str = "previous"
    replications: int = 1
    parallel: int = 1
    emit: tuple[str, ...] = EMIT_OPTIONS
    out: str = "runs"
    shared_noise: bool = False
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    horizons: tuple[int, ...] | None = None
    reference_run: bool = True

    def __post_init__(self) -> None:
        if not (self.problem in BUILTIN_PROBLEMS or self.problem.startswith("file:")):
            raise ConfigError(
                f"unknown problem '{self.problem}', available: {', '.join(BUILTIN_PROBLEMS)}, file:<path>",
                field="problem",
            )
        if self.mode not in RUN_MODES:
            raise ConfigError(f"unknown mode '{self.mode}', available: {', '.join(RUN_MODES)}", field="mode")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1", field="replications")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1", field="parallel")
        object.__setattr__(self, "emit", tuple(self.emit))
        unknown = sorted(set(self.emit) - set(EMIT_OPTIONS))
        if unknown:
            raise ConfigError(
                f"unknown emit option(s) {unknown}, available: {', '.join(EMIT_OPTIONS)}", field="emit"
            )
        if isinstance(self.constants, str) and self.constants not in ("auto", "none"):
            raise ConfigError("constants must be 'auto', 'none' or an object", field="constants")
        if self.horizons is not None:
            object.__setattr__(self, "horizons", tuple(int(t) for t in self.horizons))
            if not self.horizons or min(self.horizons) < 1:
                raise ConfigError("horizons must be a non-empty list of positive integers", field="horizons")

    @property
    def modes(self) -> list[Mode]:
        if self.mode == "both":
            return [Mode.EXACT, Mode.INEXACT]
        return [Mode(self.mode)]

    @property
    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]

    @property
    def rate_horizons(self) -> tuple[int, ...]:
        if self.horizons is not None:
            return tuple(sorted(set(self.horizons)))
        return tuple(sorted({max(1, self.horizon * i // 5) for i in range(1, 6)}))

    def with_changes(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: Any) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        base = cls()
        solver = data.get("solver", {})
        if not isinstance(solver, dict):
            raise ConfigError("expected an object", field="solver")
        raw_eta = solver.get("eta")
        eta = None if raw_eta in (None, "auto") else _number(solver, "eta", None, "solver.")
        raw_constants = solver.get("constants", "auto")
        if isinstance(raw_constants, dict):
            constants: str | StrongMonotonicityData = StrongMonotonicityData.from_dict(
                raw_constants, prefix="solver.constants."
            )
        elif raw_constants is None:
            constants = "none"
        else:
            constants = str(raw_constants)
        emit = data.get("emit", list(base.emit))
        if not isinstance(emit, list):
            raise ConfigError("expected a list", field="emit")
        horizons = data.get("horizons")
        if horizons is not None and not isinstance(horizons, list):
            raise ConfigError("expected a list", field="horizons")
        return cls(
            problem=str(data.get("problem", base.problem)),
            mode=str(solver.get("mode", base.mode)),
            eta=eta,
            alpha_bar=_number(solver, "alpha_bar", base.alpha_bar, "solver."),
            rho=_number(solver, "rho", base.rho, "solver."),
            horizon=_integer(solver, "horizon", base.horizon, "solver."),
            seed=_integer(solver, "seed", base.seed, "solver."),
            constants=constants,
            batch_cap=_integer(solver, "batch_cap", base.batch_cap, "solver."),
            budget_cap=_integer(solver, "budget_cap", base.budget_cap, "solver."),
            residual_tol=_number(solver, "residual_tol", base.residual_tol, "solver."),
            sampling=str(solver.get("sampling", base.sampling)),
            workers=_integer(solver, "workers", base.workers, "solver."),
            residual_every=_integer(solver, "residual_every", base.residual_every, "solver."),
            warm_start=str(solver.get("warm_start", base.warm_start)),
            replications=_integer(data, "replications", base.replications),
            parallel=_integer(data, "parallel", base.parallel),
            emit=tuple(str(e) for e in emit),
            out=str(data.get("out", base.out)),
            shared_noise=bool(data.get("shared_noise", base.shared_noise)),
            synthetic=SyntheticSpec.from_dict(data.get("synthetic")),
            horizons=None if horizons is None else tuple(horizons),
            reference_run=bool(data.get("reference_run", base.reference_run)),
        )

    def to_dict(self) -> dict[str, Any]:
        constants = (
            self.constants.to_dict()
            if isinstance(self.constants, StrongMonotonicityData)
            else self.constants
        )
        return {
            "problem": self.problem,
            "solver": {
                "mode": self.mode,
                "eta": "auto" if self.eta is None else self.eta,
                "alpha_bar": self.alpha_bar,
                "rho": self.rho,
                "horizon": self.horizon,
                "seed": self.seed,
                "constants": constants,
                "batch_cap": self.batch_cap,
                "budget_cap": self.budget_cap,
                "residual_tol": self.residual_tol,
                "sampling": self.sampling,
                "workers": self.workers,
                "residual_every": self.residual_every,
                "warm_start": self.warm_start,
            },
            "replications": self.replications,
            "parallel": self.parallel,
            "emit": list(self.emit),
            "out": self.out,
            "shared_noise": self.shared_noise,
            "synthetic": self.synthetic.to_dict(),
            "horizons": None if self.horizons is None else list(self.horizons),
            "reference_run": self.reference_run,
        }


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_json(path))


def build_problem_for(cfg: ExperimentConfig) -> tuple[QviProblem, BloodMarket | None]:
    if cfg.problem == "example1":
        return build_example1(shared_noise=cfg.shared_noise)
    if cfg.problem == "example2":
        return build_example2(shared_noise=cfg.shared_noise)
    if cfg.problem == "synthetic":
        s = cfg.synthetic
        return make_synthetic(s.dim, s.mu, s.lipschitz, s.seed, nu=s.nu), None
    market = load_market(cfg.problem.removeprefix("file:"))
    if cfg.shared_noise:
        market = replace(market, shared_noise=True)
    return build_problem(market), market


def resolve_constants(cfg: ExperimentConfig, problem: QviProblem) -> StrongMonotonicityData | None:
    if isinstance(cfg.constants, StrongMonotonicityData):
        return cfg.constants
    if cfg.constants == "none":
        return None
    if problem.constants is not None:
        return problem.constants
    return estimate_constants(problem, seed=cfg.seed)


def resolve_eta(cfg: ExperimentConfig, constants: StrongMonotonicityData | None) -> float:
    if cfg.eta is not None:
        return cfg.eta
    if constants is None:
        raise ConfigError("eta=auto needs strong-monotonicity constants", field="eta")
    return default_step_size(constants.mu, constants.lipschitz, constants.gamma)


def certified_constants(
    cfg: ExperimentConfig, constants: StrongMonotonicityData | None, eta: float
) -> StrongMonotonicityData | None:
    """Drop built-in exact constants whose rate premise fails for (eta, rho).

    Constants the user supplied are kept, so a bad pair still exits with a
    configuration error.
    """
    if constants is None or cfg.constants != "auto" or constants.source is not ConstantsSource.EXACT:
        return constants
    try:
        lo, hi = step_size_interval(constants.mu, constants.lipschitz, constants.gamma)
    except ConfigError:
        lo, hi = 0.0, 0.0
    beta = compute_beta(constants.mu, constants.lipschitz, constants.gamma, eta)
    q = contraction_modulus(beta, cfg.alpha_bar)
    if lo < eta < hi and cfg.rho > 1.0 - q:
        return constants
    logger.warning(
        "rate premise rho > 1 - q fails (rho=%s, 1 - q=%.6g at eta=%.6g); "
        "running '%s' without rate certificates",
        cfg.rho,
        1.0 - q,
        eta,
        cfg.problem,
    )
    return None


def solver_config(
    cfg: ExperimentConfig,
    mode: Mode,
    constants: StrongMonotonicityData | None,
    eta: float,
) -> SolverConfig:
    return SolverConfig(
        eta=eta,
        alpha_bar=cfg.alpha_bar,
        rho=cfg.rho,
        horizon=cfg.horizon,
        mode=mode,
        seed=cfg.seed,
        constants=constants,
        batch_cap=cfg.batch_cap,
        budget_cap=cfg.budget_cap,
        residual_tol=cfg.residual_tol,
        sampling=cfg.sampling,
        workers=cfg.workers,
        residual_every=cfg.residual_every,
        warm_start=cfg.warm_start,
    )


def run_replications(
    problem: QviProblem,
    config: SolverConfig,
    seeds: Sequence[int],
    *,
    parallel: int = 1,
    observability: Observability | None = None,
) -> list[RunReport]:
    """One ``solve`` per seed; results come back in seed order whatever ``parallel`` is."""

    def one(seed: int) -> RunReport:
        on_event = None
        if observability is not None:
            on_event = observability.solver_callback(mode=config.mode.value, seed=seed)
        return solve(problem, config.with_changes(seed=seed), on_event=on_event)

    if parallel <= 1 or len(seeds) <= 1:
        return [one(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(one, seeds))


def reference_report(problem: QviProblem, config: SolverConfig) -> RunReport | None:
    """Long exact-mode mean-operator run whose final iterate stands in for the solution."""
    if not problem.operator.has_mean:
        return None
    ref_cfg = config.with_changes(
        mode=Mode.EXACT,
        sampling=Sampling.MEAN,
        horizon=REFERENCE_HORIZON_FACTOR * config.horizon,
        residual_tol=REFERENCE_RESIDUAL_TOL,
        residual_every=1,
        batch_cap=None,
    )
    return solve(problem, ref_cfg)


def _residual_target(problem: QviProblem, config: SolverConfig, report: RunReport) -> float | None:
    """Noise scale eta * nu / sqrt(N_T) that a stochastic run's residual settles near."""
    if config.sampling is not Sampling.STOCHASTIC or not report.records:
        return None
    nu = config.constants.nu if config.constants is not None else problem.operator.noise_scale_hint
    if nu is None:
        return None
    return config.eta * nu / math.sqrt(report.records[-1].batch_size)


def _mode_summary(
    problem: QviProblem, config: SolverConfig, seeds: list[int], reports: list[RunReport]
) -> ModeSummary:
    first = reports[0]
    x = first.final_x
    residual = first.records[-1].residual if first.records else None
    errors = [r.records[-1].error_to_reference for r in reports if r.records]
    errors = [e for e in errors if e is not None]
    notes = list(first.notes)
    if first.stopped_early:
        notes.append(f"stopped early at k={first.records[-1].k} on residual_tol")
    target = _residual_target(problem, config, first)
    if target is not None:
        notes.append(
            f"stochastic sampling: the natural residual is noise-limited near eta*nu/sqrt(N_T) = {target:.3g}; "
            "sampling=mean removes the noise floor"
        )
    return ModeSummary(
        mode=config.mode.value,
        final_x=[float(v) for v in x],
        final_utilities=None if problem.utilities is None else [float(u) for u in problem.utilities(x)],
        natural_residual=residual,
        self_feasibility_violation=problem.moving_set.violation(x, x),
        total_samples=first.total_samples,
        total_inner_iterations=first.total_inner_iterations,
        wall_time_s=first.wall_nanos / 1e9,
        iterations=len(first.records),
        replications=len(reports),
        seeds=list(seeds),
        final_error=errors[0] if errors else None,
        mean_final_error=float(np.mean(errors)) if errors else None,
        schedule_truncated=first.schedule_truncated,
        budget_truncated=first.budget_truncated,
        reference_grade_projections=first.reference_grade_projections,
        residual_target=target,
        notes=notes,
    )


def _prepare_out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}", field="out") from exc
    return out


def run(cfg: ExperimentConfig) -> SummaryReport:
    problem, market = build_problem_for(cfg)
    constants = resolve_constants(cfg, problem)
    eta = resolve_eta(cfg, constants)
    constants = certified_constants(cfg, constants, eta)
    base_cfg = solver_config(cfg, cfg.modes[0], constants, eta)
    out = _prepare_out(cfg)
    observability = Observability(str(out)) if "events" in cfg.emit else None
    if observability is not None:
        observability.record("experiment_start", problem=problem.name, mode=cfg.mode, eta=eta)

    n_players = market.n_orgs if market is not None else 0
    summaries: dict[str, ModeSummary] = {}
    first_reports: dict[str, RunReport] = {}
    for mode in cfg.modes:
        config = base_cfg.with_changes(mode=mode)
        reports = run_replications(
            problem, config, cfg.seeds, parallel=cfg.parallel, observability=observability
        )
        summaries[mode.value] = _mode_summary(problem, config, cfg.seeds, reports)
        first_reports[mode.value] = reports[0]
        if "trajectory_csv" in cfg.emit:
            for seed, report in zip(cfg.seeds, reports):
                write_trajectory_csv(out / f"trajectory_{mode.value}_seed{seed}.csv", report, n_players)

    if "plotdata_csv" in cfg.emit:
        ref_u = None
        if problem.utilities is not None:
            reference = reference_report(problem, base_cfg) if cfg.reference_run else None
            # Without a reference run the last mode's final iterate stands in.
            ref_x = reference.final_x if reference is not None else first_reports[cfg.modes[-1].value].final_x
            ref_u = np.asarray(problem.utilities(ref_x), dtype=float)
        for mode_name, report in first_reports.items():
            write_plotdata_csv(out / f"plotdata_{mode_name}.csv", report, ref_u)

    comparison = None
    if len(summaries) == 2:
        ex, inex = summaries["exact"], summaries["inexact"]
        distance = float(np.linalg.norm(np.subtract(ex.final_x, inex.final_x)))
        comparison = {
            "final_point_distance": distance,
            "points_agree": distance <= AGREEMENT_TOL,
            "agreement_tol": AGREEMENT_TOL,
            "wall_time_ratio_exact_over_inexact": (
                ex.wall_time_s / inex.wall_time_s if inex.wall_time_s > 0 else None
            ),
        }
        if distance > AGREEMENT_TOL:
            logger.warning("exact and inexact final points differ by %.3g", distance)

    targets, notes = compare_to_published(cfg.problem, summaries)
    if isinstance(constants, StrongMonotonicityData):
        notes.append(f"constants ({constants.source.value}): {constants.to_dict()}")
        if not constants.existence_condition():
            notes.append("existence condition gamma + sqrt(1 - mu^2/L^2) < 1 does not hold")
        if base_cfg.q is not None and not cfg.rho > 1.0 - base_cfg.q:
            notes.append(
                f"rho={cfg.rho} does not exceed 1 - q = {1.0 - base_cfg.q:.6g}; no rate certificate applies"
            )
    report = SummaryReport(
        problem=problem.name,
        config={**cfg.to_dict(), "resolved_eta": eta},
        modes=summaries,
        comparison=comparison,
        published_targets=targets,
        notes=notes,
    )
    if "summary_json" in cfg.emit:
        report.write(out / "summary.json")
    if observability is not None:
        observability.record("experiment_end", problem=problem.name, modes=list(summaries))
        logger.info("events written to %s: %s", out, observability.metrics()["counters"])
    return report


def rate_study(cfg: ExperimentConfig) -> list[RateRow]:
    """Mean error over the replications at each horizon, next to the bound.

    One solve per replication runs to the largest horizon; iterates are
    prefix-stable in T, so shorter horizons read the same trajectory.
    """
    problem, _ = build_problem_for(cfg)
    if problem.reference_solution is None:
        raise ConfigError(f"rate study needs a reference solution; '{problem.name}' has none", field="problem")
    if cfg.mode == "both":
        raise ConfigError("rate study runs a single mode", field="mode")
    constants = resolve_constants(cfg, problem)
    eta = resolve_eta(cfg, constants)
    constants = certified_constants(cfg, constants, eta)
    horizons = cfg.rate_horizons
    config = solver_config(cfg, cfg.modes[0], constants, eta).with_changes(
        horizon=max(horizons), residual_tol=None, residual_every=0
    )
    reports = run_replications(problem, config, cfg.seeds, parallel=cfg.parallel)
    x0_err = float(np.mean([r.initial_error for r in reports]))
    strict = constants is not None and constants.source.value == "exact"

    rows: list[RateRow] = []
    for horizon in horizons:
        mean_err = float(np.mean([r.errors()[horizon] for r in reports]))
        bound = None
        if constants is not None:
            try:
                bound = theoretical_error_bound(horizon, x0_err, config)
            except ConfigError as exc:
                logger.warning("no valid bound at T=%d: %s", horizon, exc)
        if strict and bound is not None and mean_err > bound * (1.0 + 1e-9):
            raise BoundViolationError(
                f"mean error {mean_err:.6g} exceeds the bound {bound:.6g} at T={horizon}"
            )
        rows.append(RateRow(horizon=horizon, mean_error=mean_err, bound=bound))

    out = _prepare_out(cfg)
    write_rate_csv(out / "rate_study.csv", rows)
    return rows
