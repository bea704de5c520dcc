"""Parameter machinery for the variance-reduced projection method.

Everything here is closed-form arithmetic on the constants of a strongly
monotone instance: the contraction modulus beta, the step-size window, the
batch and inner-budget schedules and the expected-error bounds.
"""

from __future__ import annotations

import math
import sys
from collections.abc import Sequence
from typing import TYPE_CHECKING

from .errors import ConfigError, DomainError, InfeasibleConditionError, ScheduleOverflowError

if TYPE_CHECKING:
    from .config import SolverConfig

# Upper bound on sum_k 1/((k+1) ln^2(k+2)).
D_CONSTANT = 3.39

_ULP_SNAP = 8


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ConfigError(f"rho must lie in (0, 1), got {rho}", field="rho")


def _check_k(k: int) -> None:
    if isinstance(k, bool) or not isinstance(k, int) or k < 0:
        raise ConfigError(f"iteration index must be a nonnegative integer, got {k!r}", field="k")


def guarded_ceil(value: float) -> int:
    if not math.isfinite(value) or value > sys.maxsize:
        raise ScheduleOverflowError(
            f"schedule value {value!r} exceeds the platform integer range; set a cap"
        )
    nearest = round(value)
    if abs(value - nearest) <= _ULP_SNAP * math.ulp(value):
        result = int(nearest)
    else:
        result = math.ceil(value)
    if result > sys.maxsize:
        raise ScheduleOverflowError(f"schedule value {result} exceeds sys.maxsize; set a cap")
    return result


def compute_beta(mu: float, lipschitz: float, gamma: float, eta: float) -> float:
    if mu <= 0 or lipschitz <= 0 or eta <= 0:
        raise ConfigError("mu, lipschitz and eta must be positive")
    if gamma < 0:
        raise ConfigError("gamma must be nonnegative", field="gamma")
    radicand = 1.0 + lipschitz * lipschitz * eta * eta - 2.0 * eta * mu
    if radicand < 0.0:
        # Roundoff around an exact zero is accepted.
        if radicand < -1e-12:
            raise DomainError(f"beta radicand is negative ({radicand!r})")
        radicand = 0.0
    return gamma + math.sqrt(radicand)


def contraction_modulus(beta: float, alpha_bar: float) -> float:
    return (1.0 - beta) * alpha_bar


def step_size_interval(mu: float, lipschitz: float, gamma: float) -> tuple[float, float]:
    if mu <= 0 or lipschitz <= 0:
        raise ConfigError("mu and lipschitz must be positive")
    if gamma < 0:
        raise ConfigError("gamma must be nonnegative", field="gamma")
    l2 = lipschitz * lipschitz
    disc = mu * mu - l2 * (2.0 * gamma - gamma * gamma)
    if disc <= 0.0:
        raise InfeasibleConditionError(
            f"no valid step size: mu^2={mu * mu!r} <= L^2(2g-g^2)={mu * mu - disc!r}",
            field="constants",
        )
    center = mu / l2
    radius = math.sqrt(disc) / l2
    return center - radius, center + radius


def default_step_size(mu: float, lipschitz: float, gamma: float) -> float:
    lo, hi = step_size_interval(mu, lipschitz, gamma)
    return 0.5 * (max(lo, 0.0) + hi)


def batch_size(k: int, rho: float) -> int:
    _check_k(k)
    _check_rho(rho)
    if k == 0:
        return 1
    try:
        value = rho ** (-2 * k)
    except OverflowError as exc:
        raise ScheduleOverflowError(f"batch size overflows at k={k}, rho={rho}") from exc
    return guarded_ceil(value)


def inner_budget(k: int, rho: float) -> int:
    _check_k(k)
    _check_rho(rho)
    try:
        value = (k + 1) * math.log(k + 2) ** 2 / rho**k
    except (OverflowError, ZeroDivisionError) as exc:
        raise ScheduleOverflowError(f"inner budget overflows at k={k}, rho={rho}") from exc
    return max(1, guarded_ceil(value))


def total_inner_budget_bound(horizon: int, rho: float) -> float:
    _check_rho(rho)
    if horizon < 1:
        return 0.0
    inv = 1.0 / rho
    return horizon * math.log(horizon + 1) ** 2 * inv**horizon / (inv - 1.0)


def error_bound(
    horizon: int,
    x0_err: float,
    *,
    rho: float,
    q: float,
    alpha_bar: float,
    eta: float,
    nu: float,
    inner_c: float = 0.0,
) -> float:
    return rho**horizon * d_bar(
        x0_err, rho=rho, q=q, alpha_bar=alpha_bar, eta=eta, nu=nu, inner_c=inner_c
    )


def d_bar(
    x0_err: float,
    *,
    rho: float,
    q: float,
    alpha_bar: float,
    eta: float,
    nu: float,
    inner_c: float = 0.0,
) -> float:
    denom = rho + q - 1.0
    if denom <= 0.0:
        raise ConfigError(
            f"rho + q - 1 = {denom!r} <= 0; the bound requires rho > 1 - q", field="rho"
        )
    noise = alpha_bar * eta * nu
    return x0_err + noise / rho + noise / denom + alpha_bar * inner_c * D_CONSTANT / rho


def _bound_inputs(cfg: SolverConfig) -> dict[str, float]:
    constants = cfg.constants
    if constants is None:
        raise ConfigError("error bounds need strong-monotonicity constants", field="constants")
    beta = compute_beta(constants.mu, constants.lipschitz, constants.gamma, cfg.eta)
    inner_c = constants.inner_c if cfg.mode.value == "inexact" else 0.0
    return {
        "rho": cfg.rho,
        "q": contraction_modulus(beta, cfg.alpha_bar),
        "alpha_bar": cfg.alpha_bar,
        "eta": cfg.eta,
        "nu": constants.nu,
        "inner_c": inner_c,
    }


def theoretical_error_bound(horizon: int, x0_err: float, cfg: SolverConfig) -> float:
    return error_bound(horizon, x0_err, **_bound_inputs(cfg))


def d_bar_for(x0_err: float, cfg: SolverConfig) -> float:
    return d_bar(x0_err, **_bound_inputs(cfg))


def general_error_bound(
    horizon: int, x0_err: float, cfg: SolverConfig, inner_errors: Sequence[float]
) -> float:
    inputs = _bound_inputs(cfg)
    rho = inputs["rho"]
    exact_part = error_bound(horizon, x0_err, **{**inputs, "inner_c": 0.0})
    errs = list(inner_errors)[:horizon]
    tail = sum(e * rho ** (horizon - 1 - k) for k, e in enumerate(errs))
    return exact_part + inputs["alpha_bar"] * tail


def iterations_for_accuracy(eps: float, dbar: float, rho: float) -> int:
    _check_rho(rho)
    if eps <= 0:
        raise ConfigError("target accuracy must be positive", field="eps")
    if dbar <= eps:
        return 0
    return math.ceil(math.log(dbar / eps) / math.log(1.0 / rho))


def sample_complexity(eps: float, dbar: float, rho: float) -> float:
    _check_rho(rho)
    if eps <= 0:
        raise ConfigError("target accuracy must be positive", field="eps")
    r2 = rho * rho
    return r2 / (1.0 - r2) * (dbar * dbar / (eps * eps) - 1.0)
