"""Blood-donation quality competition as a generalized Nash problem.

Organization ``i`` chooses service-quality levels ``Q[i, j]`` at every
location ``j``; variables are stacked row-major, ``idx(i, j) = i * m + j``.
Donation volumes are affine in Q or ``mult * sqrt(affine)``; collection costs
are ``(a_ij + xi) Q_ij^2 + b_ij`` with standard-normal ``xi``; every location
must collect at least its demand floor, which couples the players' feasible
sets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import BoundOrderError, ConfigError, DomainError
from .problem import QviProblem
from .sets import ConstraintKind, MovingSet, ParamConstraint
from .stochastic import SampleStream, StochasticOracle

logger = logging.getLogger(__name__)

SQRT_FLOOR = 1e-12


class VolumeKind(str, Enum):
    AFFINE = "affine"
    SQRT_AFFINE = "sqrt_affine"


def _as(value, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ConfigError(f"expected shape {shape}, got {arr.shape}", field=name)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("coefficients must be finite", field=name)
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BloodMarket:
    n_orgs: int
    n_locations: int
    prices: np.ndarray
    omega: np.ndarray
    quality_weights: np.ndarray
    volume_kind: VolumeKind
    volume_coefficients: np.ndarray
    volume_constants: np.ndarray
    volume_multipliers: np.ndarray
    cost_quadratic: np.ndarray
    cost_fixed: np.ndarray
    demand_floors: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    shared_noise: bool = False
    name: str = "market"

    def __post_init__(self) -> None:
        if self.n_orgs < 1 or self.n_locations < 1:
            raise ConfigError("a market needs at least one organization and one location")
        n, m = self.n_orgs, self.n_locations
        v = n * m
        object.__setattr__(self, "volume_kind", VolumeKind(self.volume_kind))
        shapes = {
            "prices": (n,),
            "omega": (n,),
            "quality_weights": (n, m),
            "volume_coefficients": (v, v),
            "volume_constants": (v,),
            "volume_multipliers": (v,),
            "cost_quadratic": (n, m),
            "cost_fixed": (n, m),
            "demand_floors": (m,),
            "lower": (n, m),
            "upper": (n, m),
        }
        for name, shape in shapes.items():
            object.__setattr__(self, name, _as(getattr(self, name), shape, name))
        if np.any(self.cost_quadratic <= 0):
            raise ConfigError("quadratic cost coefficients must be positive", field="cost_quadratic")
        bad = np.argwhere(self.lower > self.upper)
        if bad.size:
            raise BoundOrderError(f"lower > upper at {bad.tolist()}", field="bounds")
        if self.volume_kind is VolumeKind.SQRT_AFFINE:
            lo, hi = self.lower.ravel(), self.upper.ravel()
            w = self.volume_coefficients
            smallest = np.minimum(w * lo, w * hi).sum(axis=1) + self.volume_constants
            if np.any(smallest < 1.0):
                rows = np.flatnonzero(smallest < 1.0).tolist()
                raise DomainError(
                    f"square-root volume arguments drop below 1 inside the box (rows {rows})"
                )

    @property
    def n_vars(self) -> int:
        return self.n_orgs * self.n_locations

    @property
    def owner(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_orgs), self.n_locations)

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        m = self.n_locations
        return tuple(np.arange(i * m, (i + 1) * m) for i in range(self.n_orgs))

    def idx(self, org: int, location: int) -> int:
        return org * self.n_locations + location

    def with_floors(self, floors) -> "BloodMarket":
        return replace(self, demand_floors=np.asarray(floors, dtype=float))

    def _arguments(self, q: np.ndarray) -> np.ndarray:
        arg = self.volume_coefficients @ q + self.volume_constants
        if self.volume_kind is VolumeKind.SQRT_AFFINE and np.any(arg < SQRT_FLOOR):
            logger.warning("square-root volume argument below %g clamped at Q=%s", SQRT_FLOOR, q.tolist())
            arg = np.maximum(arg, SQRT_FLOOR)
        return arg

    def volumes(self, q: np.ndarray) -> np.ndarray:
        arg = self._arguments(np.asarray(q, dtype=float))
        if self.volume_kind is VolumeKind.AFFINE:
            return self.volume_multipliers * arg
        return self.volume_multipliers * np.sqrt(arg)

    def volume_jacobian(self, q: np.ndarray) -> np.ndarray:
        if self.volume_kind is VolumeKind.AFFINE:
            return self.volume_multipliers[:, None] * self.volume_coefficients
        arg = self._arguments(np.asarray(q, dtype=float))
        scale = self.volume_multipliers / (2.0 * np.sqrt(arg))
        return scale[:, None] * self.volume_coefficients

    def volume_row(self, row: int, q: np.ndarray) -> float:
        arg = float(self.volume_coefficients[row] @ q + self.volume_constants[row])
        if self.volume_kind is VolumeKind.AFFINE:
            return float(self.volume_multipliers[row] * arg)
        if arg < SQRT_FLOOR:
            logger.warning("square-root volume argument %g clamped (row %d)", arg, row)
            arg = SQRT_FLOOR
        return float(self.volume_multipliers[row] * np.sqrt(arg))

    def volume_row_gradient(self, row: int, q: np.ndarray) -> np.ndarray:
        coef = self.volume_coefficients[row]
        if self.volume_kind is VolumeKind.AFFINE:
            return self.volume_multipliers[row] * coef
        arg = max(float(coef @ q + self.volume_constants[row]), SQRT_FLOOR)
        return self.volume_multipliers[row] / (2.0 * np.sqrt(arg)) * coef


def mean_operator(market: BloodMarket, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    owner = market.owner
    same_owner = owner[:, None] == owner[None, :]
    own_volume_slope = (market.volume_jacobian(q) * same_owner).sum(axis=0)
    return -(
        market.prices[owner] * own_volume_slope
        + market.omega[owner] * market.quality_weights.ravel()
        - 2.0 * market.cost_quadratic.ravel() * q
    )


def noise_width(market: BloodMarket) -> int:
    return 1 if market.shared_noise else market.n_vars


def perturbed_operator(market: BloodMarket, q: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """One row of G(q, xi) per row of standard normals; E[G] = F."""
    q = np.asarray(q, dtype=float)
    return mean_operator(market, q)[None, :] + 2.0 * np.asarray(normals) * q[None, :]


def sample_operator(market: BloodMarket, q: np.ndarray, stream: SampleStream) -> np.ndarray:
    return perturbed_operator(market, q, stream.normals(noise_width(market))[None, :])[0]


def utilities(market: BloodMarket, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    shape = (market.n_orgs, market.n_locations)
    volumes = market.volumes(q).reshape(shape)
    quality = q.reshape(shape)
    return (
        market.prices * volumes.sum(axis=1)
        + market.omega * (market.quality_weights * quality).sum(axis=1)
        - (market.cost_quadratic * quality**2 + market.cost_fixed).sum(axis=1)
    )


def _demand_constraint(market: BloodMarket, org: int, location: int) -> ParamConstraint:
    block = market.blocks[org]
    own_row = market.idx(org, location)
    other_rows = [market.idx(k, location) for k in range(market.n_orgs) if k != org]
    floor = float(market.demand_floors[location])

    def mixed(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        z = np.array(x, dtype=float)
        z[block] = y[block]
        return z

    def evaluate(x: np.ndarray, y: np.ndarray) -> float:
        others = sum(market.volume_row(r, x) for r in other_rows)
        return floor - market.volume_row(own_row, mixed(x, y)) - others

    def gradient_y(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        grad = np.zeros(market.n_vars)
        grad[block] = -market.volume_row_gradient(own_row, mixed(x, y))[block]
        return grad

    kind = (
        ConstraintKind.AFFINE_IN_Y
        if market.volume_kind is VolumeKind.AFFINE
        else ConstraintKind.CONVEX_IN_Y
    )
    return ParamConstraint(
        block=org,
        evaluate=evaluate,
        gradient_y=gradient_y,
        kind=kind,
        name=f"demand[org={org + 1},loc={location + 1}]",
    )


def moving_set(market: BloodMarket) -> MovingSet:
    constraints = [
        _demand_constraint(market, i, j)
        for i in range(market.n_orgs)
        for j in range(market.n_locations)
    ]
    return MovingSet(market.lower.ravel(), market.upper.ravel(), market.blocks, tuple(constraints))


def market_oracle(market: BloodMarket) -> StochasticOracle:
    def sample_fn(q: np.ndarray, normals: np.ndarray) -> np.ndarray:
        return perturbed_operator(market, q, normals)

    extreme = np.maximum(np.abs(market.lower), np.abs(market.upper)).ravel()
    return StochasticOracle(
        dim=market.n_vars,
        noise_width=noise_width(market),
        sample_fn=sample_fn,
        mean_fn=lambda q: mean_operator(market, q),
        noise_scale_hint=2.0 * float(np.linalg.norm(extreme)),
    )


def build_problem(market: BloodMarket) -> QviProblem:
    return QviProblem(
        dim=market.n_vars,
        operator=market_oracle(market),
        moving_set=moving_set(market),
        name=market.name,
        utilities=lambda q: utilities(market, q),
        affine=market.volume_kind is VolumeKind.AFFINE,
    )


_COEFFICIENTS = [
    [10.0, 0.0, -1.0, -1.0],
    [0.0, 12.0, -1.0, -2.0],
    [-1.0, -1.0, 11.0, 0.0],
    [-1.0, -1.0, 0.0, 12.0],
]
_CONSTANTS = [130.0, 135.0, 123.0, 135.0]


def example_market(kind: VolumeKind, *, shared_noise: bool = False) -> BloodMarket:
    sqrt = kind is VolumeKind.SQRT_AFFINE
    return BloodMarket(
        n_orgs=2,
        n_locations=2,
        prices=[70.0, 60.0],
        omega=[9.0, 10.0],
        quality_weights=[[8.0, 9.0], [9.0, 10.0]],
        volume_kind=kind,
        volume_coefficients=_COEFFICIENTS,
        volume_constants=_CONSTANTS,
        volume_multipliers=[50.0, 30.0, 40.0, 20.0] if sqrt else [1.0, 1.0, 1.0, 1.0],
        cost_quadratic=[[5.0, 18.0], [4.5, 5.0]],
        cost_fixed=[[10000.0, 12000.0], [12000.0, 14000.0]],
        demand_floors=[1200.0, 1100.0],
        lower=[[50.0, 40.0], [60.0, 70.0]],
        upper=[[80.0, 70.0], [90.0, 90.0]],
        shared_noise=shared_noise,
        name="example2" if sqrt else "example1",
    )


def build_example1(*, shared_noise: bool = False) -> tuple[QviProblem, BloodMarket]:
    market = example_market(VolumeKind.AFFINE, shared_noise=shared_noise)
    return build_problem(market), market


def build_example2(*, shared_noise: bool = False) -> tuple[QviProblem, BloodMarket]:
    market = example_market(VolumeKind.SQRT_AFFINE, shared_noise=shared_noise)
    return build_problem(market), market
