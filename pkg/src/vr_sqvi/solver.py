from __future__ import annotations

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .config import Mode, Sampling, SolverConfig, WarmStart
from .errors import ConfigError, InfeasibleSetError
from .primal_dual import AcceleratedPrimalDual, project_inexact
from .problem import QviProblem
from .projection import exact_projection, feasibility_probe, project_exact
from .stochastic import batch_average
from .theory import batch_size, inner_budget

logger = logging.getLogger(__name__)

EventCallback = Callable[[dict[str, Any]], None]

# Inexact outputs violating K(x) by more than this trigger an emptiness probe.
PROBE_VIOLATION = 1e-6


@dataclass(frozen=True, eq=False)
class IterateRecord:
    k: int
    x: np.ndarray
    batch_size: int
    inner_budget: int
    inner_iterations_used: int
    wall_nanos: int
    residual: float | None = None
    error_to_reference: float | None = None
    utilities: np.ndarray | None = None
    inner_error_proxy: float = 0.0
    feasibility_violation: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "x": [float(v) for v in self.x],
            "batch_size": self.batch_size,
            "inner_budget": self.inner_budget,
            "inner_iterations_used": self.inner_iterations_used,
            "wall_nanos": self.wall_nanos,
            "residual": self.residual,
            "error_to_reference": self.error_to_reference,
            "utilities": None if self.utilities is None else [float(v) for v in self.utilities],
            "inner_error_proxy": self.inner_error_proxy,
            "feasibility_violation": self.feasibility_violation,
        }


@dataclass(frozen=True, eq=False)
class RunReport:
    records: list[IterateRecord]
    final_x: np.ndarray
    config_echo: dict[str, Any]
    total_samples: int
    total_inner_iterations: int
    x0: np.ndarray
    initial_error: float | None = None
    schedule_truncated: bool = False
    budget_truncated: bool = False
    stopped_early: bool = False
    reference_grade_projections: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def wall_nanos(self) -> int:
        return sum(r.wall_nanos for r in self.records)

    def errors(self) -> list[float | None]:
        """Errors to the reference, index T holding |x_T - x*|."""
        return [self.initial_error] + [r.error_to_reference for r in self.records]

    def to_dict(self) -> dict[str, Any]:
        return {
            "records": [r.to_dict() for r in self.records],
            "final_x": [float(v) for v in self.final_x],
            "config_echo": self.config_echo,
            "total_samples": self.total_samples,
            "total_inner_iterations": self.total_inner_iterations,
            "x0": [float(v) for v in self.x0],
            "initial_error": self.initial_error,
            "schedule_truncated": self.schedule_truncated,
            "budget_truncated": self.budget_truncated,
            "stopped_early": self.stopped_early,
            "reference_grade_projections": self.reference_grade_projections,
            "notes": list(self.notes),
        }


def _emit(callback: EventCallback | None, payload: dict[str, Any]) -> None:
    if callback is None:
        return
    try:
        callback(payload)
    except Exception:  # noqa: BLE001
        pass


def natural_residual(problem: QviProblem, x: np.ndarray, eta: float) -> float:
    x = np.asarray(x, dtype=float)
    step = x - eta * problem.operator.mean(x)
    return float(np.linalg.norm(x - project_exact(problem.moving_set, x, step)))


def _check_x0(problem: QviProblem, x0: np.ndarray) -> None:
    lo, hi = problem.moving_set.box_lo, problem.moving_set.box_hi
    if x0.shape != (problem.dim,):
        raise ConfigError(f"x0 must have length {problem.dim}", field="x0")
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise ConfigError("x0 must lie inside the box bounds", field="x0")


def _raise_if_empty(problem: QviProblem, x: np.ndarray, k: int) -> None:
    flags = feasibility_probe(problem.moving_set, x)
    empty = [b for b, ok in enumerate(flags) if not ok]
    if empty:
        raise InfeasibleSetError(f"K(x_{k}) is empty on blocks {empty}", blocks=empty)


def solve(
    problem: QviProblem,
    config: SolverConfig,
    inner: AcceleratedPrimalDual | None = None,
    *,
    x0: np.ndarray | None = None,
    on_event: EventCallback | None = None,
) -> RunReport:
    inner = inner or AcceleratedPrimalDual()
    operator = problem.operator
    moving_set = problem.moving_set
    if config.sampling is Sampling.MEAN and not operator.has_mean:
        raise ConfigError("mean sampling needs the exact mean operator", field="sampling")
    if config.residual_tol is not None and not operator.has_mean:
        raise ConfigError("residual_tol needs the exact mean operator", field="residual_tol")

    x = problem.initial_point() if x0 is None else np.asarray(x0, dtype=float).copy()
    _check_x0(problem, x)
    start_x = x.copy()
    initial_error = problem.error_to_reference(x)
    exact = config.mode is Mode.EXACT
    alpha = config.alpha_bar
    records: list[IterateRecord] = []
    schedule_truncated = budget_truncated = stopped_early = False
    reference_grade = 0
    prev_y: np.ndarray | None = None
    prev_lam: np.ndarray | None = None

    _emit(
        on_event,
        {"phase": "solve_start", "problem": problem.name, "mode": config.mode.value, "horizon": config.horizon},
    )
    for k in range(config.horizon):
        started = time.perf_counter_ns()
        n_k = batch_size(k, config.rho)
        if config.batch_cap is not None and n_k > config.batch_cap:
            n_k = config.batch_cap
            if not schedule_truncated:
                logger.info("batch_cap=%d truncates the batch schedule at k=%d", config.batch_cap, k)
                _emit(on_event, {"phase": "schedule_capped", "which": "batch", "k": k})
            schedule_truncated = True
        t_k = 0
        if not exact:
            t_k = inner_budget(k, config.rho)
            if config.budget_cap is not None and t_k > config.budget_cap:
                t_k = config.budget_cap
                if not budget_truncated:
                    logger.info("budget_cap=%d truncates the inner budgets at k=%d", config.budget_cap, k)
                    _emit(on_event, {"phase": "schedule_capped", "which": "inner", "k": k})
                budget_truncated = True

        if config.sampling is Sampling.MEAN:
            g = operator.mean(x)
        else:
            g = batch_average(operator, x, n_k, config.seed, k, workers=config.workers)
        v = x - config.eta * g

        if exact:
            proj = exact_projection(moving_set, x, v, seed_solver=inner)
            y = proj.u
            reference_grade += int(proj.reference_grade)
            used, proxy, violation = 0, 0.0, moving_set.violation(x, y)
        else:
            warm = prev_y if config.warm_start is WarmStart.PREVIOUS else None
            lam = prev_lam if config.warm_start is WarmStart.PREVIOUS else None
            result = project_inexact(moving_set, x, v, t_k, warm, warm_multipliers=lam, solver=inner)
            if result.feasibility_violation > PROBE_VIOLATION:
                _raise_if_empty(problem, x, k)
            y = result.u
            prev_y, prev_lam = y, result.multipliers
            used, proxy, violation = result.iterations, result.primal_gap_proxy, result.feasibility_violation

        # (1 - a) x + a y, written so that y == x leaves x bit-identical
        x = x + alpha * (y - x)
        wall = time.perf_counter_ns() - started

        residual = None
        last = k == config.horizon - 1
        want_residual = operator.has_mean and (
            last
            or config.residual_tol is not None
            or (config.residual_every > 0 and (k + 1) % config.residual_every == 0)
        )
        if want_residual:
            residual = natural_residual(problem, x, config.eta)
        utilities = None if problem.utilities is None else np.asarray(problem.utilities(x), dtype=float)
        record = IterateRecord(
            k=k,
            x=x.copy(),
            batch_size=n_k,
            inner_budget=t_k,
            inner_iterations_used=used,
            wall_nanos=wall,
            residual=residual,
            error_to_reference=problem.error_to_reference(x),
            utilities=utilities,
            inner_error_proxy=proxy,
            feasibility_violation=violation,
        )
        records.append(record)
        logger.debug("k=%d N_k=%d t_k=%d residual=%s", k, n_k, t_k, residual)
        _emit(
            on_event,
            {
                "phase": "iteration_end",
                "k": k,
                "batch_size": n_k,
                "inner_budget": t_k,
                "residual": residual,
                "error_to_reference": record.error_to_reference,
            },
        )
        if config.residual_tol is not None and residual is not None and residual <= config.residual_tol:
            stopped_early = True
            _emit(on_event, {"phase": "early_stop", "k": k, "residual": residual})
            break

    notes: list[str] = []
    if schedule_truncated:
        notes.append(f"batch schedule truncated by batch_cap={config.batch_cap}")
    if budget_truncated:
        notes.append(f"inner budget schedule truncated by budget_cap={config.budget_cap}")
    if reference_grade:
        notes.append(f"{reference_grade} exact projections were reference-grade (nonlinear constraints)")
    report = RunReport(
        records=records,
        final_x=x.copy(),
        config_echo=config.to_dict(),
        total_samples=sum(r.batch_size for r in records),
        total_inner_iterations=sum(r.inner_iterations_used for r in records),
        x0=start_x,
        initial_error=initial_error,
        schedule_truncated=schedule_truncated,
        budget_truncated=budget_truncated,
        stopped_early=stopped_early,
        reference_grade_projections=reference_grade,
        notes=notes,
    )
    _emit(
        on_event,
        {
            "phase": "solve_end",
            "iterations": len(records),
            "total_samples": report.total_samples,
            "total_inner_iterations": report.total_inner_iterations,
            "final_residual": records[-1].residual if records else None,
        },
    )
    return report
