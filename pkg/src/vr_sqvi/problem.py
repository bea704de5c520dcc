from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .config import ConstantsSource, StrongMonotonicityData
from .errors import ConfigError
from .sets import MovingSet
from .stochastic import StochasticOracle, noise_sup_estimate, probe_points

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class QviProblem:
    dim: int
    operator: StochasticOracle
    moving_set: MovingSet
    reference_solution: np.ndarray | None = None
    x0: np.ndarray | None = None
    name: str = "problem"
    utilities: Callable[[np.ndarray], np.ndarray] | None = None
    constants: StrongMonotonicityData | None = None
    affine: bool = False

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ConfigError("problem dimension must be >= 1", field="dim")
        if self.operator.dim != self.dim:
            raise ConfigError(
                f"operator dimension {self.operator.dim} != problem dimension {self.dim}",
                field="operator",
            )
        if self.moving_set.dim != self.dim:
            raise ConfigError(
                f"moving set dimension {self.moving_set.dim} != problem dimension {self.dim}",
                field="moving_set",
            )
        for name in ("reference_solution", "x0"):
            value = getattr(self, name)
            if value is not None:
                arr = np.asarray(value, dtype=float).copy()
                if arr.shape != (self.dim,):
                    raise ConfigError(f"{name} must have length {self.dim}", field=name)
                object.__setattr__(self, name, arr)

    def initial_point(self) -> np.ndarray:
        if self.x0 is not None:
            return self.x0.copy()
        return self.moving_set.midpoint()

    def error_to_reference(self, x: np.ndarray) -> float | None:
        if self.reference_solution is None:
            return None
        return float(np.linalg.norm(np.asarray(x) - self.reference_solution))


def jacobian_fd(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * step))
    return np.column_stack(cols)


def estimate_constants(
    problem: QviProblem,
    *,
    step: float = FD_STEP,
    inner_c: float = 1.0,
    nu_replications: int = 2000,
    seed: int = 0,
) -> StrongMonotonicityData:
    """Finite-difference mu and L over box probe points, plus nu.

    nu is the oracle's noise_scale_hint when it carries one and is sampled
    otherwise. gamma cannot be estimated and is reported as 0.
    """
    if not problem.operator.has_mean:
        raise ConfigError("constant estimation needs the exact mean operator", field="operator")
    lo, hi = problem.moving_set.box_lo, problem.moving_set.box_hi
    points = [problem.moving_set.midpoint()] if problem.affine else probe_points(lo, hi, seed=seed)
    mu = np.inf
    lipschitz = 0.0
    for point in points:
        jac = jacobian_fd(problem.operator.mean, point, step)
        sym = 0.5 * (jac + jac.T)
        mu = min(mu, float(np.linalg.eigvalsh(sym)[0]))
        lipschitz = max(lipschitz, float(np.linalg.norm(jac, 2)))
    if not mu > 0:
        raise ConfigError(
            f"operator of '{problem.name}' is not strongly monotone on the box (mu estimate {mu})",
            field="constants",
        )
    nu = problem.operator.noise_scale_hint
    if nu is None:
        nu = noise_sup_estimate(problem.operator, lo, hi, replications=nu_replications, seed=seed)
    logger.warning(
        "gamma for '%s' cannot be estimated; using gamma=0 (mu=%.6g, L=%.6g, nu=%.6g)",
        problem.name,
        mu,
        lipschitz,
        nu,
    )
    return StrongMonotonicityData(
        mu=mu,
        lipschitz=max(lipschitz, mu),
        gamma=0.0,
        nu=nu,
        inner_c=inner_c,
        source=ConstantsSource.ESTIMATED,
    )
