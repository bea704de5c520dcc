import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vr_sqvi.blood import mean_operator, moving_set
from vr_sqvi.errors import BoundOrderError, ConfigError, DimensionTooLargeError, InfeasibleSetError
from vr_sqvi.primal_dual import project_inexact
from vr_sqvi.projection import exact_projection, feasibility_probe, project_box, project_exact
from vr_sqvi.sets import MovingSet, affine_constraint


def _halfspace_set(dim=3, bound=1.0):
    # sum(y) <= 1 on [-bound, bound]^dim
    cons = affine_constraint(0, dim, {i: 1.0 for i in range(dim)}, offset=-1.0, name="sum")
    return MovingSet(-bound * np.ones(dim), bound * np.ones(dim), (np.arange(dim),), (cons,))


def test_project_box():
    assert_array_equal(project_box([-2.0, 0.5, 3.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]), [0.0, 0.5, 1.0])
    with pytest.raises(BoundOrderError):
        project_box([0.0], [1.0], [0.0])


def test_box_nonexpansive_and_obtuse():
    rng = np.random.default_rng(0)
    lo, hi = -np.ones(5), np.ones(5)
    u = rng.normal(scale=3.0, size=(10_000, 5))
    v = rng.normal(scale=3.0, size=(10_000, 5))
    pu = project_box(u, lo, hi)
    pv = project_box(v, lo, hi)
    assert np.all(
        np.linalg.norm(pu - pv, axis=1) <= np.linalg.norm(u - v, axis=1) + 1e-9
    )
    y = rng.uniform(-1.0, 1.0, size=(10_000, 5))
    assert np.all(np.sum((u - pu) * (y - pu), axis=1) <= 1e-9)


def test_halfspace_projection_values():
    moving = MovingSet(-10 * np.ones(2), 10 * np.ones(2), (np.arange(2),), (
        affine_constraint(0, 2, {0: 1.0, 1: 1.0}, name="sum"),
    ))
    x = np.zeros(2)
    assert_allclose(project_exact(moving, x, np.array([1.0, 1.0])), [0.0, 0.0], atol=1e-12)
    assert_allclose(project_exact(moving, x, np.array([3.0, 1.0])), [1.0, -1.0], atol=1e-12)
    assert_allclose(project_exact(moving, x, np.array([-3.0, 1.0])), [-3.0, 1.0], atol=1e-12)
    # Face and constraint active together.
    assert_allclose(project_exact(moving, x, np.array([30.0, -20.0])), [10.0, -10.0], atol=1e-12)


def test_polyhedral_projection_properties():
    rng = np.random.default_rng(1)
    moving = _halfspace_set()
    x = np.zeros(3)
    for _ in range(1000):
        u = rng.normal(scale=2.0, size=3)
        v = rng.normal(scale=2.0, size=3)
        pu = project_exact(moving, x, u)
        pv = project_exact(moving, x, v)
        assert moving.contains(x, pu)
        assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-9
        y = rng.uniform(-1.0, 1.0, size=3)
        if moving.contains(x, y):
            assert (u - pu) @ (y - pu) <= 1e-9


def test_projection_depends_on_parameter():
    # Player 0 needs y0 + x1 >= 1; player 1 is box-constrained only.
    cons = affine_constraint(0, 2, {0: -1.0}, offset=1.0, param_weights={1: -1.0}, name="floor")
    moving = MovingSet(np.zeros(2), np.ones(2), (np.array([0]), np.array([1])), (cons,))
    assert_allclose(project_exact(moving, np.array([0.0, 0.2]), np.array([0.0, 0.2])), [0.8, 0.2])
    assert_allclose(project_exact(moving, np.array([0.0, 0.7]), np.array([0.0, 0.2])), [0.3, 0.2])


def test_fast_path_returns_clip():
    moving = _halfspace_set()
    result = exact_projection(moving, np.zeros(3), np.array([0.1, -5.0, 0.2]))
    assert_array_equal(result.u, [0.1, -1.0, 0.2])
    assert not result.reference_grade


def test_block_too_large():
    moving = _halfspace_set(dim=9)
    with pytest.raises(DimensionTooLargeError):
        project_exact(moving, np.zeros(9), np.zeros(9))


def test_empty_set_is_reported(empty_set_problem):
    moving = empty_set_problem.moving_set
    x = np.full(2, 0.5)
    assert feasibility_probe(moving, x) == [False]
    with pytest.raises(InfeasibleSetError) as info:
        project_exact(moving, x, x)
    assert info.value.blocks == [0]
    assert info.value.exit_code == 4


def test_feasibility_accepts_feasible_sets():
    assert feasibility_probe(_halfspace_set(), np.zeros(3)) == [True]


def test_moving_set_validation():
    with pytest.raises(BoundOrderError):
        MovingSet(np.ones(2), np.zeros(2), (np.arange(2),))
    with pytest.raises(ConfigError):
        MovingSet(np.zeros(3), np.ones(3), (np.array([0, 1]),))


def test_example1_active_floor(example1_market):
    market = example1_market.with_floors([1400.0, 1100.0])
    moving = moving_set(market)
    x = moving.midpoint()
    v = np.array([45.0, 55.0, 75.0, 80.0])
    result = exact_projection(moving, x, v)
    assert_allclose(result.u, [59.7, 55.0, 75.0, 80.0], atol=1e-9)
    assert not result.reference_grade


def test_example2_active_floor_is_reference_grade(example2_market):
    market = example2_market.with_floors([2300.0, 1100.0])
    moving = moving_set(market)
    x = moving.midpoint()
    other = market.volume_row(market.idx(1, 0), x)
    # 50 sqrt(10 y11 - x21 - x22 + 130) = 2300 - P21(x)
    threshold = (((2300.0 - other) / 50.0) ** 2 + 75.0 + 80.0 - 130.0) / 10.0
    result = exact_projection(moving, x, np.array([45.0, 55.0, 75.0, 80.0]))
    assert result.reference_grade
    assert_allclose(result.u, [threshold, 55.0, 75.0, 80.0], atol=1e-7)
    assert moving.violation(x, result.u) <= 1e-8


def test_projection_is_idempotent(example1_market):
    rng = np.random.default_rng(2)
    halfspace = _halfspace_set()
    market = moving_set(example1_market.with_floors([1500.0, 1400.0]))
    for moving, scale in ((halfspace, 2.0), (market, 30.0)):
        x = moving.midpoint()
        for _ in range(200):
            v = x + rng.normal(scale=scale, size=x.size)
            once = project_exact(moving, x, v)
            assert_allclose(project_exact(moving, x, once), once, rtol=0.0, atol=1e-12)


def test_blockwise_matches_joint_projection():
    # The same two constraints, split over two blocks or kept in one.
    def build(split):
        first = affine_constraint(0, 4, {0: 1.0, 1: 1.0}, offset=-1.0, name="first")
        second = affine_constraint(1 if split else 0, 4, {2: 1.0, 3: -1.0}, offset=-0.5, name="second")
        blocks = (np.arange(2), np.arange(2, 4)) if split else (np.arange(4),)
        return MovingSet(-2.0 * np.ones(4), 2.0 * np.ones(4), blocks, (first, second))

    split, joint = build(True), build(False)
    rng = np.random.default_rng(3)
    x = np.zeros(4)
    for _ in range(300):
        v = rng.normal(scale=2.0, size=4)
        assert_allclose(project_exact(split, x, v), project_exact(joint, x, v), rtol=0.0, atol=1e-12)


def test_lower_halfspace_from_origin():
    # y1 + y2 >= 3
    floor = affine_constraint(0, 2, {0: -1.0, 1: -1.0}, offset=3.0, name="floor")
    moving = MovingSet(np.zeros(2), 10.0 * np.ones(2), (np.arange(2),), (floor,))
    x = v = np.zeros(2)
    assert_allclose(project_exact(moving, x, v), [1.5, 1.5], atol=1e-12)
    inexact = project_inexact(moving, x, v, 10_000)
    assert_allclose(inexact.u, [1.5, 1.5], atol=1e-4)


def _grid_projection(moving, x, v, block, rounds=10, points=41):
    """Nearest feasible point of a 2-D block by repeatedly zoomed grids."""
    index = moving.blocks[block]
    constraints = moving.block_constraints(block)
    lo, hi = moving.box_lo[index].copy(), moving.box_hi[index].copy()
    best = None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(2)]
        step = np.array([a[1] - a[0] for a in axes])
        best_dist = np.inf
        for a in axes[0]:
            for b in axes[1]:
                y = x.copy()
                y[index] = (a, b)
                if all(c.evaluate(x, y) <= 0.0 for c in constraints):
                    dist = (a - v[index[0]]) ** 2 + (b - v[index[1]]) ** 2
                    if dist < best_dist:
                        best_dist, best = dist, np.array([a, b])
        lo = np.maximum(moving.box_lo[index], best - 3.0 * step)
        hi = np.minimum(moving.box_hi[index], best + 3.0 * step)
    return best


@pytest.mark.parametrize("floors", [[1200.0, 1100.0], [1500.0, 1400.0]])
def test_example1_player1_step_matches_grid(floors, example1_market):
    market = example1_market.with_floors(floors)
    moving = moving_set(market)
    x = moving.midpoint()
    v = x - 0.0125 * mean_operator(market, x)
    projected = project_exact(moving, x, v)[moving.blocks[0]]
    assert_allclose(projected, _grid_projection(moving, x, v, 0), rtol=0.0, atol=1e-6)


def test_example1_midpoint_is_feasible(example1_market):
    moving = moving_set(example1_market)
    assert feasibility_probe(moving, moving.midpoint()) == [True, True]
