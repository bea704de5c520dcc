"""Budgeted inexact projection onto a moving set.

Per block, the projection ``min 1/2 |z - v|^2 s.t. g(z) <= 0, z in box`` is
solved as the saddle problem ``min_z max_{lam >= 0} 1/2 |z - v|^2 + lam' g(z)``
with an accelerated primal-dual iteration:

    s      = (1 + theta) g(z_t) - theta g(z_{t-1})
    lam    = max(0, lam + sigma s)
    z_t+1  = clip((z_t - tau J(z_t)' lam + tau v) / (1 + tau))
    theta  = 1 / sqrt(1 + tau),  tau <- theta tau,  sigma <- sigma / theta

For affine g this is the strongly convex accelerated Chambolle-Pock scheme,
whose primal iterates satisfy |z_t - z*|^2 = O(1/t^2). For nonlinear convex g
the dual step follows the largest Jacobian norm seen so far, and the primal
step is backtracked until the Lagrangian remainder, bounded through the
change of the Jacobian along the step, stays below its quadratic model.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .sets import BlockView, MovingSet

logger = logging.getLogger(__name__)

BlockCallback = Callable[[int, int, np.ndarray], None]


@dataclass(frozen=True, eq=False)
class InnerSolveResult:
    u: np.ndarray
    iterations: int
    primal_gap_proxy: float
    feasibility_violation: float
    multipliers: np.ndarray
    reference_grade: bool = False


@dataclass(frozen=True)
class BlockSolve:
    z: np.ndarray
    multipliers: np.ndarray
    iterations: int
    proxy: float


def _finite(values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise DomainError("constraint evaluation left its domain (non-finite value)")
    return values


@dataclass(frozen=True)
class AcceleratedPrimalDual:
    tau0: float = 1.0
    shrink: float = 0.5
    delta: float = 0.1
    max_backtracks: int = 20

    def solve_block(
        self,
        view: BlockView,
        v: np.ndarray,
        budget: int,
        z0: np.ndarray | None = None,
        lam0: np.ndarray | None = None,
        tol: float | None = None,
        callback: Callable[[int, np.ndarray], None] | None = None,
    ) -> BlockSolve:
        v = np.asarray(v, dtype=float)
        # A feasible clip is the projection itself; no budget is spent on it.
        clipped = view.clip(v)
        if view.count == 0 or float(np.max(_finite(view.values(clipped)))) <= 0.0:
            if callback is not None:
                callback(0, clipped)
            return BlockSolve(z=clipped, multipliers=np.zeros(view.count), iterations=0, proxy=0.0)

        z = view.clip(v if z0 is None else np.asarray(z0, dtype=float))
        lam = np.zeros(view.count) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0.0)
        g_cur = _finite(view.values(z))
        g_prev = g_cur
        jac = view.jacobian(z)
        lip = float(np.linalg.norm(jac, 2)) or 1.0
        tau = self.tau0
        sigma = 1.0 / (tau * lip * lip)
        theta = 1.0
        proxy = math.inf
        iterations = 0

        for _ in range(budget):
            jac_new = jac
            for attempt in range(self.max_backtracks + 1):
                s = (1.0 + theta) * g_cur - theta * g_prev
                lam_new = np.maximum(0.0, lam + sigma * s)
                z_new = view.clip((z - tau * (jac.T @ lam_new) + tau * v) / (1.0 + tau))
                g_new = _finite(view.values(z_new))
                if view.affine:
                    break
                jac_new = _finite(view.jacobian(z_new))
                dz = z_new - z
                dz2 = float(dz @ dz)
                if attempt == self.max_backtracks or dz2 == 0.0:
                    break
                jnorm = float(np.linalg.norm(jac_new, 2))
                if jnorm > lip:
                    lip = 1.1 * jnorm
                    sigma = min(sigma, 1.0 / (tau * lip * lip))
                    continue
                # Convex g: lam' (g(z_new) - g(z) - J(z) dz) <= lam' (J(z_new) - J(z)) dz.
                # The right side does not cancel large constraint values.
                remainder = float(lam_new @ ((jac_new - jac) @ dz))
                if remainder > (1.0 - self.delta) / (2.0 * tau) * dz2:
                    tau *= self.shrink
                    continue
                break

            proxy = float(np.linalg.norm(z_new - z)) / tau
            theta = 1.0 / math.sqrt(1.0 + tau)
            tau *= theta
            sigma /= theta
            g_prev, g_cur = g_cur, g_new
            z, lam, jac = z_new, lam_new, jac_new
            iterations += 1
            if callback is not None:
                callback(iterations, z)
            if tol is not None and proxy <= tol:
                break

        return BlockSolve(z=z, multipliers=lam, iterations=iterations, proxy=proxy)


def constraint_indices(moving_set: MovingSet, block: int) -> list[int]:
    return [i for i, c in enumerate(moving_set.constraints) if c.block == block]


def project_inexact(
    moving_set: MovingSet,
    x: np.ndarray,
    v: np.ndarray,
    budget: int,
    warm_start: np.ndarray | None = None,
    *,
    warm_multipliers: np.ndarray | None = None,
    tol: float | None = None,
    solver: AcceleratedPrimalDual | None = None,
    callback: BlockCallback | None = None,
) -> InnerSolveResult:
    if budget < 1:
        raise ConfigError(f"inner budget must be >= 1, got {budget}", field="budget")
    solver = solver or AcceleratedPrimalDual()
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.empty_like(v)
    multipliers = np.zeros(len(moving_set.constraints))
    used = 0
    proxies: list[float] = []
    for b, index in enumerate(moving_set.blocks):
        view = moving_set.block_view(x, b)
        rows = constraint_indices(moving_set, b)
        z0 = None if warm_start is None else np.asarray(warm_start, dtype=float)[index]
        lam0 = None if warm_multipliers is None else np.asarray(warm_multipliers)[rows]
        block_cb = None if callback is None else (lambda t, z, b=b: callback(b, t, z))
        out = solver.solve_block(view, v[index], budget, z0=z0, lam0=lam0, tol=tol, callback=block_cb)
        u[index] = out.z
        multipliers[rows] = out.multipliers
        used = max(used, out.iterations)
        proxies.append(out.proxy)

    violation = 0.0
    if moving_set.constraints:
        violation = float(np.max(moving_set.constraint_values(x, u), initial=0.0))
    proxy = float(np.linalg.norm(proxies)) if proxies else 0.0
    return InnerSolveResult(
        u=u,
        iterations=used,
        primal_gap_proxy=proxy,
        feasibility_violation=max(0.0, violation),
        multipliers=multipliers,
    )
