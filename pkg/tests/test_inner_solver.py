import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vr_sqvi.blood import moving_set
from vr_sqvi.errors import ConfigError, DomainError
from vr_sqvi.primal_dual import AcceleratedPrimalDual, project_inexact
from vr_sqvi.projection import exact_projection
from vr_sqvi.sets import ConstraintKind, MovingSet, ParamConstraint

CHECKPOINTS = [16 * 2**i for i in range(9)]


def test_budget_must_be_positive():
    moving = MovingSet.box_only([0.0], [1.0])
    with pytest.raises(ConfigError):
        project_inexact(moving, np.zeros(1), np.zeros(1), 0)


def test_box_only_block_is_clipped():
    moving = MovingSet.box_only([0.0, 0.0], [1.0, 1.0])
    result = project_inexact(moving, np.zeros(2), np.array([2.0, -1.0]), 7)
    assert_array_equal(result.u, [1.0, 0.0])
    assert result.iterations == 0
    assert result.feasibility_violation == 0.0


def test_converges_on_active_floor(example1_market):
    moving = moving_set(example1_market.with_floors([1400.0, 1100.0]))
    x = moving.midpoint()
    result = project_inexact(moving, x, np.array([45.0, 55.0, 75.0, 80.0]), 4096)
    assert_allclose(result.u, [59.7, 55.0, 75.0, 80.0], atol=1e-3)
    assert result.feasibility_violation <= 1e-2
    assert result.multipliers[0] > 0.0
    assert result.multipliers[1] == 0.0


def test_warm_start_at_solution_stays_put(example1_market):
    moving = moving_set(example1_market)
    x = moving.midpoint()
    v = x.copy()
    result = project_inexact(moving, x, v, 50, warm_start=x)
    assert_allclose(result.u, x, atol=1e-12)


def test_callback_sees_every_iteration():
    moving = MovingSet.box_only([0.0], [1.0])
    seen = []
    project_inexact(moving, np.zeros(1), np.array([0.5]), 3, callback=lambda b, t, z: seen.append((b, t)))
    # A block without constraints reports once, with nothing spent.
    assert seen == [(0, 0)]


def test_non_finite_constraint_raises():
    bad = ParamConstraint(
        block=0,
        evaluate=lambda x, y: float("nan"),
        gradient_y=lambda x, y: np.ones_like(y),
        kind=ConstraintKind.CONVEX_IN_Y,
        name="broken",
    )
    moving = MovingSet(np.zeros(2), np.ones(2), (np.arange(2),), (bad,))
    with pytest.raises(DomainError):
        project_inexact(moving, np.zeros(2), np.zeros(2), 5)


def _random_state(rng):
    x = np.array(
        [rng.uniform(75.0, 80.0), rng.uniform(65.0, 70.0), rng.uniform(60.0, 63.0), rng.uniform(85.0, 90.0)]
    )
    v = np.array([rng.uniform(45.0, 50.0), rng.uniform(40.0, 70.0), x[2], x[3]])
    return x, v


def _squared_error_slope(moving, x, v):
    reference = exact_projection(moving, x, v).u
    view = moving.block_view(x, 0)
    target = reference[view.index]
    errors = {}

    def record(t, z):
        if t in CHECKPOINTS:
            errors[t] = float(np.sum((z - target) ** 2))

    AcceleratedPrimalDual().solve_block(view, v[view.index], CHECKPOINTS[-1], callback=record)
    # Points at roundoff level carry no rate information.
    usable = [(t, e) for t, e in sorted(errors.items()) if e >= 1e-18]
    if len(usable) < 3:
        return None
    ts, es = zip(*usable)
    return float(np.polyfit(np.log(ts), np.log(es), 1)[0])


@pytest.mark.parametrize("floors, which", [([1200.0, 1100.0], "example1"), ([2300.0, 1100.0], "example2")])
def test_inner_rate_on_market_geometry(floors, which, request):
    market = request.getfixturevalue(f"{which}_market").with_floors(floors)
    moving = moving_set(market)
    rng = np.random.default_rng(11 if which == "example1" else 13)
    for _ in range(10):
        x, v = _random_state(rng)
        view = moving.block_view(x, 0)
        # The floor at location 1 must bind for player 1.
        assert view.values(view.clip(v[view.index]))[0] > 0.0
        slope = _squared_error_slope(moving, x, v)
        if slope is not None:
            assert slope <= -1.7


def _location1_threshold(market, x):
    """Smallest Q11 meeting the location-1 floor when the rest is frozen at x."""
    other = market.volume_row(market.idx(1, 0), x)
    needed = ((market.demand_floors[0] - other) / market.volume_multipliers[0]) ** 2
    row = market.volume_coefficients[0]
    rest = row[1:] @ x[1:] + market.volume_constants[0]
    return (needed - rest) / row[0]


def test_nonlinear_floor_keeps_converging(example2_market):
    market = example2_market.with_floors([2300.0, 1100.0])
    moving = moving_set(market)
    rng = np.random.default_rng(13)
    for _ in range(5):
        x, v = _random_state(rng)
        view = moving.block_view(x, 0)
        target = np.array([_location1_threshold(market, x), view.clip(v[view.index])[1]])
        assert_allclose(exact_projection(moving, x, v).u[view.index], target, rtol=0.0, atol=1e-9)

        errors = {}

        def record(t, z):
            if t in (256, 1024, 4096):
                errors[t] = float(np.sum((z - target) ** 2))

        AcceleratedPrimalDual().solve_block(view, v[view.index], 4096, callback=record)
        assert errors[256] <= 1e-10
        assert errors[1024] <= max(errors[256] / 4.0, 1e-20)
        assert errors[4096] <= max(errors[1024] / 4.0, 1e-20)


def test_quadrupled_budget_halves_distance(example1_market):
    moving = moving_set(example1_market)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x, v = _random_state(rng)
        view = moving.block_view(x, 0)
        target = exact_projection(moving, x, v).u[view.index]
        distances = []
        AcceleratedPrimalDual().solve_block(
            view, v[view.index], 1024, callback=lambda t, z: distances.append(float(np.linalg.norm(z - target)))
        )
        # Worst distance over the tail of the run from t on.
        tail = np.maximum.accumulate(distances[::-1])[::-1]
        for t in (16, 64, 256):
            if tail[t - 1] > 1e-9:
                assert tail[t - 1] / max(tail[4 * t - 1], 1e-300) >= 2.0
