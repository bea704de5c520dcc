"""Moving constraint sets K(x) = {y in box : g_i(x, y) <= 0}.

Each constraint belongs to one player block: it reads ``y`` only through the
coordinates of that block, everything else enters through the parameter
``x``. Evaluations receive full-length vectors; gradients are full-length
too and vanish outside the owning block.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BoundOrderError, ConfigError

FEASIBILITY_TOL = 1e-8

Evaluate = Callable[[np.ndarray, np.ndarray], float]
Gradient = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ConstraintKind(str, Enum):
    AFFINE_IN_Y = "affine_in_y"
    CONVEX_IN_Y = "convex_in_y"


@dataclass(frozen=True, eq=False)
class ParamConstraint:
    block: int
    evaluate: Evaluate
    gradient_y: Gradient
    kind: ConstraintKind = ConstraintKind.CONVEX_IN_Y
    name: str = ""

    @property
    def affine(self) -> bool:
        return self.kind is ConstraintKind.AFFINE_IN_Y


def affine_constraint(
    block: int,
    dim: int,
    weights: dict[int, float],
    offset: float = 0.0,
    param_weights: dict[int, float] | None = None,
    name: str = "",
) -> ParamConstraint:
    """g(x, y) = sum_i w_i y_i + sum_i p_i x_i + offset."""
    coef = np.zeros(dim)
    for index, value in weights.items():
        coef[index] = value
    param = np.zeros(dim)
    for index, value in (param_weights or {}).items():
        param[index] = value

    def evaluate(x: np.ndarray, y: np.ndarray) -> float:
        return float(coef @ y + param @ x + offset)

    def gradient_y(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return coef.copy()

    return ParamConstraint(
        block=block,
        evaluate=evaluate,
        gradient_y=gradient_y,
        kind=ConstraintKind.AFFINE_IN_Y,
        name=name,
    )


@dataclass
class BlockView:
    """Constraints of one block with everything outside it frozen at ``x``."""

    index: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    x: np.ndarray
    constraints: list[ParamConstraint]
    affine: bool
    _matrix: np.ndarray | None = field(default=None, repr=False)
    _offset: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.affine and self.constraints:
            anchor = self.x[self.index]
            self._matrix = self._jacobian_at(anchor)
            self._offset = self._values_at(anchor) - self._matrix @ anchor

    @property
    def size(self) -> int:
        return int(self.index.size)

    @property
    def count(self) -> int:
        return len(self.constraints)

    def embed(self, z: np.ndarray) -> np.ndarray:
        y = self.x.copy()
        y[self.index] = z
        return y

    def _values_at(self, z: np.ndarray) -> np.ndarray:
        y = self.embed(z)
        return np.array([c.evaluate(self.x, y) for c in self.constraints], dtype=float)

    def _jacobian_at(self, z: np.ndarray) -> np.ndarray:
        y = self.embed(z)
        rows = [np.asarray(c.gradient_y(self.x, y), dtype=float)[self.index] for c in self.constraints]
        return np.array(rows, dtype=float).reshape(len(rows), self.size)

    def values(self, z: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix @ z + self._offset
        return self._values_at(z)

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix
        return self._jacobian_at(z)

    def affine_data(self) -> tuple[np.ndarray, np.ndarray]:
        if self._matrix is None:
            raise ValueError("block constraints are not affine")
        return self._matrix, self._offset

    def clip(self, z: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(z, self.lo), self.hi)


@dataclass(frozen=True, eq=False)
class MovingSet:
    box_lo: np.ndarray
    box_hi: np.ndarray
    blocks: tuple[np.ndarray, ...]
    constraints: tuple[ParamConstraint, ...] = ()

    def __post_init__(self) -> None:
        lo = np.asarray(self.box_lo, dtype=float).copy()
        hi = np.asarray(self.box_hi, dtype=float).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ConfigError("box bounds must be non-empty vectors of equal length", field="box")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("box bounds must be finite", field="box")
        bad = np.flatnonzero(lo > hi)
        if bad.size:
            raise BoundOrderError(f"box_lo > box_hi at coordinates {bad.tolist()}", field="box")
        blocks = tuple(np.asarray(b, dtype=int).ravel() for b in self.blocks)
        covered = np.sort(np.concatenate(blocks)) if blocks else np.array([], dtype=int)
        if not np.array_equal(covered, np.arange(lo.size)):
            raise ConfigError("blocks must partition the coordinates", field="blocks")
        for c in self.constraints:
            if not 0 <= c.block < len(blocks):
                raise ConfigError(f"constraint '{c.name}' names unknown block {c.block}", field="constraints")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "box_lo", lo)
        object.__setattr__(self, "box_hi", hi)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @classmethod
    def box_only(
        cls, lo: Sequence[float], hi: Sequence[float], blocks: Sequence[Sequence[int]] | None = None
    ) -> "MovingSet":
        lo_arr = np.asarray(lo, dtype=float)
        if blocks is None:
            blocks = [range(lo_arr.size)]
        return cls(lo_arr, np.asarray(hi, dtype=float), tuple(np.asarray(list(b)) for b in blocks))

    @property
    def dim(self) -> int:
        return int(self.box_lo.size)

    @property
    def affine(self) -> bool:
        return all(c.affine for c in self.constraints)

    def block_constraints(self, block: int) -> list[ParamConstraint]:
        return [c for c in self.constraints if c.block == block]

    def block_view(self, x: np.ndarray, block: int) -> BlockView:
        cons = self.block_constraints(block)
        index = self.blocks[block]
        return BlockView(
            index=index,
            lo=self.box_lo[index],
            hi=self.box_hi[index],
            x=np.asarray(x, dtype=float),
            constraints=cons,
            affine=all(c.affine for c in cons),
        )

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.box_lo + self.box_hi)

    def constraint_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.array([c.evaluate(x, y) for c in self.constraints], dtype=float)

    def violation(self, x: np.ndarray, y: np.ndarray) -> float:
        box = max(
            float(np.max(self.box_lo - y, initial=0.0)),
            float(np.max(y - self.box_hi, initial=0.0)),
        )
        if not self.constraints:
            return box
        return max(box, float(np.max(self.constraint_values(x, y), initial=0.0)))

    def contains(self, x: np.ndarray, y: np.ndarray, tol: float = FEASIBILITY_TOL) -> bool:
        return self.violation(x, y) <= tol
