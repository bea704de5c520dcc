from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vr_sqvi.blood import (
    VolumeKind,
    build_example1,
    build_example2,
    market_oracle,
    mean_operator,
    moving_set,
    sample_operator,
    utilities,
)
from vr_sqvi.errors import BoundOrderError, ConfigError, DomainError
from vr_sqvi.market_file import market_from_dict, market_to_dict
from vr_sqvi.problem import jacobian_fd
from vr_sqvi.stochastic import SampleStream

from .conftest import EXAMPLE1_OFFSETS, EXAMPLE1_SLOPES, EXAMPLE1_SOLUTION


def _random_points(market, count, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = market.lower.ravel(), market.upper.ravel()
    return [lo + rng.random(lo.size) * (hi - lo) for _ in range(count)]


def test_example1_operator_is_diagonal_affine(example1_market):
    for q in _random_points(example1_market, 20):
        assert_allclose(mean_operator(example1_market, q), EXAMPLE1_SLOPES * q - EXAMPLE1_OFFSETS, atol=1e-9)


def test_example1_solution_point(example1_market):
    # Q12 sits on its lower bound with a positive operator value.
    assert_allclose(mean_operator(example1_market, EXAMPLE1_SOLUTION), [0.0, 519.0, 0.0, 0.0], atol=1e-9)
    assert moving_set(example1_market).contains(EXAMPLE1_SOLUTION, EXAMPLE1_SOLUTION)


@pytest.mark.parametrize("which", ["example1_market", "example2_market"])
def test_operator_is_negative_own_utility_gradient(which, request):
    market = request.getfixturevalue(which)
    owner = market.owner
    for q in _random_points(market, 5, seed=1):
        jac = jacobian_fd(lambda z: utilities(market, z), q, step=1e-4)
        own = -jac[owner, np.arange(market.n_vars)]
        assert_allclose(mean_operator(market, q), own, rtol=1e-5, atol=1e-3)


def test_utilities_at_reported_point(example1_market):
    point = np.array([72.81, 40.0, 78.09, 77.59])
    assert_allclose(utilities(example1_market, point), [7065.0, 40589.0], rtol=1e-3)


def test_example2_constraint_gradients(example2_market):
    moving = moving_set(example2_market)
    x = moving.midpoint()
    for q in _random_points(example2_market, 3, seed=2):
        for c in moving.constraints:
            block = moving.blocks[c.block]

            def value(z, c=c, block=block):
                y = x.copy()
                y[block] = z[block]
                return np.array([c.evaluate(x, y)])

            numeric = jacobian_fd(value, q)[0]
            assert_allclose(c.gradient_y(x, q)[block], numeric[block], rtol=1e-5, atol=1e-6)


def test_volume_kind_sets_constraint_kind(example1_market, example2_market):
    assert moving_set(example1_market).affine
    assert not moving_set(example2_market).affine


def test_sqrt_domain_is_checked(example2_market):
    data = market_to_dict(example2_market)
    data["volume"]["constants"] = [-1000.0, 135.0, 123.0, 135.0]
    with pytest.raises(DomainError):
        market_from_dict(data)


def test_bounds_are_ordered(example1_market):
    data = market_to_dict(example1_market)
    data["bounds"]["lower"][0][0] = 95.0
    with pytest.raises(BoundOrderError):
        market_from_dict(data)


def test_costs_must_be_positive(example1_market):
    data = market_to_dict(example1_market)
    data["costs"]["quadratic"][1][1] = 0.0
    with pytest.raises(ConfigError) as info:
        market_from_dict(data)
    assert info.value.field == "cost_quadratic"


def test_with_floors_keeps_everything_else(example1_market):
    raised = example1_market.with_floors([1400.0, 1100.0])
    assert_allclose(raised.demand_floors, [1400.0, 1100.0])
    assert raised.volume_kind is VolumeKind.AFFINE
    assert_allclose(raised.volume_coefficients, example1_market.volume_coefficients)


def test_worked_volumes_at_lower_corner():
    _, affine = build_example1()
    _, sqrt = build_example2()
    corner = affine.lower.ravel()
    p11, p21 = affine.idx(0, 0), affine.idx(1, 0)
    volumes = affine.volumes(corner)
    assert volumes[p11] == pytest.approx(500.0)
    assert volumes[p11] + volumes[p21] == pytest.approx(1193.0)
    volumes = sqrt.volumes(corner)
    assert volumes[p11] == pytest.approx(50.0 * np.sqrt(500.0))
    assert volumes[p11] == pytest.approx(1118.03, abs=5e-3)
    assert volumes[p11] + volumes[p21] == pytest.approx(2171.0, abs=5e-2)


def test_location1_floor_at_the_diagonal(example1_market):
    moving = moving_set(example1_market)
    floor = moving.constraints[0]
    for q in _random_points(example1_market, 20, seed=4):
        q11, q12, q21, q22 = q
        supplied = 9.0 * q11 + 10.0 * q21 - q22 - q12 + 253.0
        assert floor.evaluate(q, q) == pytest.approx(1200.0 - supplied, abs=1e-9)


@pytest.mark.parametrize("shared", [False, True])
def test_sample_operator_is_unbiased(shared, example1_market):
    market = replace(example1_market, shared_noise=shared)
    oracle = market_oracle(market)
    q = _random_points(market, 1, seed=5)[0]
    draws = np.array([sample_operator(market, q, SampleStream(9, 0, j)) for j in range(1, 4001)])
    # Same draws through the oracle.
    assert_array_equal(draws[17], oracle.sample(q, SampleStream(9, 0, 18)))
    stderr = 2.0 * np.abs(q) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean_operator(market, q)) <= 5.0 * stderr)


def test_example2_is_strongly_monotone_on_random_pairs(example2_market):
    points = _random_points(example2_market, 400, seed=6)
    ratios = []
    for a, b in zip(points[::2], points[1::2]):
        diff = a - b
        ratios.append((mean_operator(example2_market, a) - mean_operator(example2_market, b)) @ diff / (diff @ diff))
    assert min(ratios) > 5.0
