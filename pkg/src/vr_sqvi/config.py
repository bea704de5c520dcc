from __future__ import annotations

import contextvars
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import ConfigError, InfeasibleConditionError
from .theory import compute_beta, contraction_modulus, step_size_interval

logger = logging.getLogger(__name__)

MAX_SEED = 2**64

# Copies that keep eta, alpha_bar, rho and constants do not repeat rate warnings.
_RATE_FIELDS = frozenset({"eta", "alpha_bar", "rho", "constants"})
_rate_warnings: contextvars.ContextVar[bool] = contextvars.ContextVar("rate_warnings", default=True)


class Mode(str, Enum):
    EXACT = "exact"
    INEXACT = "inexact"


class Sampling(str, Enum):
    STOCHASTIC = "stochastic"
    MEAN = "mean"


class ConstantsSource(str, Enum):
    EXACT = "exact"
    ESTIMATED = "estimated"


class WarmStart(str, Enum):
    PREVIOUS = "previous"
    BOX = "box"


def _enum(cls: type[Enum], value: Any, name: str) -> Any:
    if isinstance(value, cls):
        return value
    try:
        return cls(str(value).strip().lower())
    except ValueError as exc:
        options = ", ".join(item.value for item in cls)
        raise ConfigError(f"unknown {name} '{value}', available: {options}", field=name) from exc


def _number(data: dict[str, Any], key: str, default: Any, prefix: str = "") -> Any:
    value = data.get(key, default)
    if value is None:
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a number, got {value!r}", field=prefix + key) from exc


def _integer(data: dict[str, Any], key: str, default: Any, prefix: str = "") -> Any:
    value = data.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ConfigError(f"expected an integer, got {value!r}", field=prefix + key)
    try:
        return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected an integer, got {value!r}", field=prefix + key) from exc


@dataclass(frozen=True)
class StrongMonotonicityData:
    mu: float
    lipschitz: float
    gamma: float = 0.0
    nu: float = 0.0
    inner_c: float = 1.0
    source: ConstantsSource = ConstantsSource.EXACT

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", _enum(ConstantsSource, self.source, "source"))
        for name in ("mu", "lipschitz"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be positive and finite, got {value}", field=name)
        for name in ("gamma", "nu", "inner_c"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be nonnegative and finite, got {value}", field=name)
        if self.mu > self.lipschitz * (1.0 + 1e-12):
            raise ConfigError(
                f"mu={self.mu} exceeds lipschitz={self.lipschitz}", field="mu"
            )

    def existence_condition(self) -> bool:
        ratio = min(1.0, self.mu / self.lipschitz)
        return self.gamma + math.sqrt(1.0 - ratio * ratio) < 1.0

    @classmethod
    def from_dict(cls, data: dict[str, Any], prefix: str = "constants.") -> "StrongMonotonicityData":
        if not isinstance(data, dict):
            raise ConfigError("constants must be an object", field=prefix.rstrip("."))
        for key in ("mu", "lipschitz"):
            if key not in data:
                raise ConfigError("missing required field", field=prefix + key)
        return cls(
            mu=_number(data, "mu", None, prefix),
            lipschitz=_number(data, "lipschitz", None, prefix),
            gamma=_number(data, "gamma", 0.0, prefix),
            nu=_number(data, "nu", 0.0, prefix),
            inner_c=_number(data, "inner_c", 1.0, prefix),
            source=_enum(ConstantsSource, data.get("source", "exact"), prefix + "source"),
        )

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["source"] = self.source.value
        return payload


@dataclass(frozen=True)
class SolverConfig:
    eta: float
    alpha_bar: float
    rho: float
    horizon: int
    mode: Mode = Mode.INEXACT
    seed: int = 0
    constants: StrongMonotonicityData | None = None
    batch_cap: int | None = None
    budget_cap: int | None = None
    residual_tol: float | None = None
    sampling: Sampling = Sampling.STOCHASTIC
    workers: int = 1
    residual_every: int = 1
    warm_start: WarmStart = WarmStart.PREVIOUS
    _q: float | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", _enum(Mode, self.mode, "mode"))
        object.__setattr__(self, "sampling", _enum(Sampling, self.sampling, "sampling"))
        object.__setattr__(self, "warm_start", _enum(WarmStart, self.warm_start, "warm_start"))
        if not math.isfinite(self.eta) or self.eta <= 0:
            raise ConfigError(f"eta must be positive, got {self.eta}", field="eta")
        if not 0.0 < self.alpha_bar < 1.0:
            raise ConfigError(f"alpha_bar must lie in (0, 1), got {self.alpha_bar}", field="alpha_bar")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}", field="rho")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}", field="horizon")
        if not 0 <= self.seed < MAX_SEED:
            raise ConfigError("seed must be a 64-bit unsigned integer", field="seed")
        for name in ("batch_cap", "budget_cap"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1 when set, got {value}", field=name)
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ConfigError("residual_tol must be positive when set", field="residual_tol")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")
        if self.residual_every < 0:
            raise ConfigError("residual_every must be >= 0", field="residual_every")
        self._check_rate_conditions()

    def _check_rate_conditions(self) -> None:
        constants = self.constants
        warn = logger.warning if _rate_warnings.get() else logger.debug
        if constants is None:
            warn(
                "no strong-monotonicity constants supplied; step-size and rate conditions unchecked"
            )
            return
        strict = constants.source is ConstantsSource.EXACT

        def violation(message: str, field_name: str) -> None:
            if strict:
                raise ConfigError(message, field=field_name)
            warn("%s (estimated constants, continuing)", message)

        try:
            lo, hi = step_size_interval(constants.mu, constants.lipschitz, constants.gamma)
        except InfeasibleConditionError:
            if strict:
                raise
            warn("estimated constants admit no valid step size (continuing)")
        else:
            if not lo < self.eta < hi:
                violation(f"eta={self.eta} outside the step-size interval ({lo}, {hi})", "eta")
        beta = compute_beta(constants.mu, constants.lipschitz, constants.gamma, self.eta)
        q = contraction_modulus(beta, self.alpha_bar)
        object.__setattr__(self, "_q", q)
        if not self.rho > 1.0 - q:
            violation(f"rho={self.rho} must exceed 1 - q = {1.0 - q}", "rho")

    @property
    def q(self) -> float | None:
        return self._q

    @property
    def beta(self) -> float | None:
        if self.constants is None:
            return None
        c = self.constants
        return compute_beta(c.mu, c.lipschitz, c.gamma, self.eta)

    def with_changes(self, **changes: Any) -> "SolverConfig":
        if not _RATE_FIELDS.isdisjoint(changes):
            return replace(self, **changes)
        token = _rate_warnings.set(False)
        try:
            return replace(self, **changes)
        finally:
            _rate_warnings.reset(token)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SolverConfig":
        if not isinstance(data, dict):
            raise ConfigError("solver config must be an object", field="solver")
        for key in ("eta", "alpha_bar", "rho", "horizon"):
            if data.get(key) is None:
                raise ConfigError("missing required field", field=key)
        raw_constants = data.get("constants")
        constants = (
            None if raw_constants in (None, {}) else StrongMonotonicityData.from_dict(raw_constants)
        )
        return cls(
            eta=_number(data, "eta", None),
            alpha_bar=_number(data, "alpha_bar", None),
            rho=_number(data, "rho", None),
            horizon=_integer(data, "horizon", None),
            mode=_enum(Mode, data.get("mode", "inexact"), "mode"),
            seed=_integer(data, "seed", 0),
            constants=constants,
            batch_cap=_integer(data, "batch_cap", None),
            budget_cap=_integer(data, "budget_cap", None),
            residual_tol=_number(data, "residual_tol", None),
            sampling=_enum(Sampling, data.get("sampling", "stochastic"), "sampling"),
            workers=_integer(data, "workers", 1),
            residual_every=_integer(data, "residual_every", 1),
            warm_start=_enum(WarmStart, data.get("warm_start", "previous"), "warm_start"),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "eta": self.eta,
            "alpha_bar": self.alpha_bar,
            "rho": self.rho,
            "horizon": self.horizon,
            "mode": self.mode.value,
            "seed": self.seed,
            "constants": None if self.constants is None else self.constants.to_dict(),
            "batch_cap": self.batch_cap,
            "budget_cap": self.budget_cap,
            "residual_tol": self.residual_tol,
            "sampling": self.sampling.value,
            "workers": self.workers,
            "residual_every": self.residual_every,
            "warm_start": self.warm_start.value,
        }
