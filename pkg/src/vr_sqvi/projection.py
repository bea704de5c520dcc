"""Exact projections onto small moving sets and feasibility probes.

Affine blocks are projected by active-set enumeration: every combination of
box faces and active constraints is tried in order of size and the first
candidate satisfying the KKT conditions is the projection. Blocks with
nonlinear convex constraints use the same enumeration with the KKT system
solved by ``scipy.optimize.root`` from a primal-dual seed; those results are
reference-grade rather than exact.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import BoundOrderError, DimensionTooLargeError, InfeasibleSetError, ProjectionError
from .primal_dual import AcceleratedPrimalDual
from .sets import FEASIBILITY_TOL, BlockView, MovingSet

logger = logging.getLogger(__name__)

MAX_EXACT_DIM = 8
MAX_EXACT_CONSTRAINTS = 8
SEED_BUDGET = 2000
SEED_TOL = 1e-10

_FREE, _LO, _HI = 0, 1, 2


@dataclass(frozen=True, eq=False)
class ExactProjection:
    u: np.ndarray
    reference_grade: bool


def project_box(v: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    bad = np.flatnonzero(lo > hi)
    if bad.size:
        raise BoundOrderError(f"lo > hi at coordinates {bad.tolist()}", field="box")
    return np.minimum(np.maximum(np.asarray(v, dtype=float), lo), hi)


def _tolerance(v: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(v), initial=0.0)))


def _active_sets(
    size: int, count: int, guess: tuple[tuple[int, ...], tuple[int, ...]] | None
) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Yield (face state per coordinate, active constraint rows), smallest first."""
    seen = set()
    if guess is not None:
        seen.add(guess)
        yield guess
    for total in range(size + count + 1):
        for n_active in range(min(total, count) + 1):
            n_fixed = total - n_active
            if n_fixed > size or n_active > size - n_fixed:
                continue
            for rows in itertools.combinations(range(count), n_active):
                for fixed in itertools.combinations(range(size), n_fixed):
                    for sides in itertools.product((_LO, _HI), repeat=n_fixed):
                        state = [_FREE] * size
                        for coord, side in zip(fixed, sides):
                            state[coord] = side
                        candidate = (tuple(state), rows)
                        if candidate in seen:
                            continue
                        yield candidate


def _guess(view: BlockView, z: np.ndarray, lam: np.ndarray | None, v: np.ndarray):
    tol = _tolerance(v)
    state = tuple(
        _LO if z[i] <= view.lo[i] + tol and v[i] < z[i] else _HI if z[i] >= view.hi[i] - tol and v[i] > z[i] else _FREE
        for i in range(view.size)
    )
    g = view.values(z)
    if lam is None:
        rows = tuple(int(i) for i in np.flatnonzero(g > -tol))
    else:
        rows = tuple(int(i) for i in np.flatnonzero((lam > tol) | (np.abs(g) <= 1e-6 * max(1.0, np.abs(g).max()))))
    n_free = state.count(_FREE)
    if len(rows) > n_free:
        rows = rows[:n_free]
    return state, rows


def _verify(
    view: BlockView,
    v: np.ndarray,
    z: np.ndarray,
    lam: np.ndarray,
    state: tuple[int, ...],
    rows: tuple[int, ...],
    jac: np.ndarray,
) -> bool:
    tol = _tolerance(v)
    if not np.all(np.isfinite(z)) or not np.all(np.isfinite(lam)):
        return False
    if np.any(lam < -tol):
        return False
    if np.any(z < view.lo - tol) or np.any(z > view.hi + tol):
        return False
    if view.count and np.max(view.values(z)) > FEASIBILITY_TOL:
        return False
    if not state:
        return True
    reduced = z - v
    if rows:
        reduced = reduced + jac[list(rows)].T @ lam
    for i, side in enumerate(state):
        if side == _LO and reduced[i] < -tol:
            return False
        if side == _HI and reduced[i] > tol:
            return False
    return True


def _fixed_values(view: BlockView, state: tuple[int, ...]) -> np.ndarray:
    z = np.zeros(view.size)
    for i, side in enumerate(state):
        if side == _LO:
            z[i] = view.lo[i]
        elif side == _HI:
            z[i] = view.hi[i]
    return z


def _affine_candidate(view: BlockView, v: np.ndarray, state, rows):
    matrix, offset = view.affine_data()
    free = [i for i, s in enumerate(state) if s == _FREE]
    z = _fixed_values(view, state)
    z[free] = v[free]
    if not rows:
        return z, np.zeros(0)
    a_s = matrix[list(rows)]
    a_free = a_s[:, free]
    gram = a_free @ a_free.T
    fixed = [i for i, s in enumerate(state) if s != _FREE]
    rhs = a_free @ v[free] + a_s[:, fixed] @ z[fixed] + offset[list(rows)]
    if np.linalg.matrix_rank(gram) < len(rows):
        return None
    lam = np.linalg.solve(gram, rhs)
    z[free] = v[free] - a_free.T @ lam
    return z, lam


def _nonlinear_candidate(view: BlockView, v: np.ndarray, state, rows, seed_z, seed_lam):
    free = [i for i, s in enumerate(state) if s == _FREE]
    base = _fixed_values(view, state)
    rows_list = list(rows)
    n_free = len(free)

    def assemble(w: np.ndarray) -> np.ndarray:
        z = base.copy()
        z[free] = w[:n_free]
        return z

    def kkt(w: np.ndarray) -> np.ndarray:
        z = assemble(w)
        lam = w[n_free:]
        grad = z[free] - v[free]
        if rows_list:
            grad = grad + view.jacobian(z)[rows_list][:, free].T @ lam
            return np.concatenate([grad, view.values(z)[rows_list]])
        return grad

    start = np.concatenate([seed_z[free], np.maximum(seed_lam[rows_list], 0.0) if rows_list else []])
    if start.size == 0:
        return base, np.zeros(0)
    with np.errstate(all="ignore"):
        sol = optimize.root(kkt, start, method="hybr", options={"xtol": 1e-14})
    if not sol.success:
        return None
    z = assemble(sol.x)
    return z, sol.x[n_free:]


def _project_block(
    view: BlockView,
    v: np.ndarray,
    seed_solver: AcceleratedPrimalDual,
    block: int = 0,
) -> tuple[np.ndarray, bool]:
    clipped = view.clip(v)
    if view.count == 0:
        return clipped, False
    if view.size > MAX_EXACT_DIM or view.count > MAX_EXACT_CONSTRAINTS:
        raise DimensionTooLargeError(
            f"exact projection supports blocks with <= {MAX_EXACT_DIM} coordinates and "
            f"<= {MAX_EXACT_CONSTRAINTS} constraints, got {view.size} and {view.count}"
        )
    if np.max(view.values(clipped)) <= 0.0:
        return clipped, False

    if view.affine:
        seed_z, seed_lam = clipped, None
    else:
        seed = seed_solver.solve_block(view, v, SEED_BUDGET, tol=SEED_TOL)
        seed_z, seed_lam = seed.z, seed.multipliers

    for state, rows in _active_sets(view.size, view.count, _guess(view, seed_z, seed_lam, v)):
        if view.affine:
            candidate = _affine_candidate(view, v, state, rows)
        else:
            candidate = _nonlinear_candidate(view, v, state, rows, seed_z, seed_lam)
        if candidate is None:
            continue
        z, lam = candidate
        jac = view.jacobian(z)
        if _verify(view, v, z, lam, state, rows, jac):
            return view.clip(z), not view.affine

    if not _block_feasible(view):
        raise InfeasibleSetError(
            f"K(x) is empty on block {block} (coordinates {view.index.tolist()})", blocks=[block]
        )
    if view.affine:
        raise ProjectionError(f"no KKT point verified for block {view.index.tolist()}")
    logger.warning(
        "no KKT point verified for nonlinear block %s; returning primal-dual seed",
        view.index.tolist(),
    )
    return seed_z, True


def exact_projection(
    moving_set: MovingSet,
    x: np.ndarray,
    v: np.ndarray,
    *,
    seed_solver: AcceleratedPrimalDual | None = None,
) -> ExactProjection:
    seed_solver = seed_solver or AcceleratedPrimalDual()
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.empty_like(v)
    reference = False
    for b, index in enumerate(moving_set.blocks):
        view = moving_set.block_view(x, b)
        z, ref = _project_block(view, v[index], seed_solver, b)
        u[index] = z
        reference = reference or ref
    return ExactProjection(u=u, reference_grade=reference)


def project_exact(moving_set: MovingSet, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    return exact_projection(moving_set, x, v).u


def _block_min_max_violation(view: BlockView) -> float:
    """min over the box of max_i g_i, via an epigraph program."""
    n = view.size
    start = view.clip(0.5 * (view.lo + view.hi))
    if view.affine:
        matrix, offset = view.affine_data()
        cost = np.zeros(n + 1)
        cost[-1] = 1.0
        a_ub = np.hstack([matrix, -np.ones((view.count, 1))])
        bounds = [(float(lo), float(hi)) for lo, hi in zip(view.lo, view.hi)] + [(None, None)]
        res = optimize.linprog(cost, A_ub=a_ub, b_ub=-offset, bounds=bounds, method="highs")
        if res.status == 0:
            return float(res.fun)
        return float(np.max(view.values(start)))

    t0 = float(np.max(view.values(start)))
    res = optimize.minimize(
        lambda w: w[-1],
        np.append(start, t0),
        jac=lambda w: np.append(np.zeros(n), 1.0),
        method="SLSQP",
        bounds=[(float(lo), float(hi)) for lo, hi in zip(view.lo, view.hi)] + [(None, None)],
        constraints=[
            {
                "type": "ineq",
                "fun": lambda w: w[-1] - view.values(w[:n]),
                "jac": lambda w: np.hstack([-view.jacobian(w[:n]), np.ones((view.count, 1))]),
            }
        ],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    z = view.clip(res.x[:n])
    return float(np.max(view.values(z)))


def _block_feasible(view: BlockView) -> bool:
    if view.count == 0:
        return True
    return _block_min_max_violation(view) <= FEASIBILITY_TOL


def feasibility_probe(moving_set: MovingSet, x: np.ndarray) -> list[bool]:
    x = np.asarray(x, dtype=float)
    return [_block_feasible(moving_set.block_view(x, b)) for b in range(len(moving_set.blocks))]
