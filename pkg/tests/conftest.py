import numpy as np
import pytest

from vr_sqvi.blood import VolumeKind, build_problem, example_market
from vr_sqvi.config import ConstantsSource, StrongMonotonicityData
from vr_sqvi.problem import QviProblem
from vr_sqvi.sets import MovingSet, affine_constraint
from vr_sqvi.stochastic import StochasticOracle

# Coordinates of the 2x2 markets are (Q11, Q12, Q21, Q22).
EXAMPLE1_SLOPES = np.array([10.0, 36.0, 9.0, 10.0])
EXAMPLE1_OFFSETS = np.array([772.0, 921.0, 750.0, 820.0])
EXAMPLE1_SOLUTION = np.array([77.2, 40.0, 750.0 / 9.0, 82.0])


@pytest.fixture
def example1_market():
    return example_market(VolumeKind.AFFINE)


@pytest.fixture
def example2_market():
    return example_market(VolumeKind.SQRT_AFFINE)


@pytest.fixture
def example1(example1_market):
    return build_problem(example1_market)


@pytest.fixture
def example2(example2_market):
    return build_problem(example2_market)


def deterministic_problem(mean_fn, lo, hi, *, reference=None, constraints=(), blocks=None):
    lo = np.asarray(lo, dtype=float)

    def sample_fn(x, normals):
        return np.repeat(np.asarray(mean_fn(x), dtype=float)[None, :], normals.shape[0], axis=0)

    oracle = StochasticOracle(dim=lo.size, noise_width=0, sample_fn=sample_fn, mean_fn=mean_fn)
    if blocks is None:
        blocks = (np.arange(lo.size),)
    return QviProblem(
        dim=lo.size,
        operator=oracle,
        moving_set=MovingSet(lo, np.asarray(hi, dtype=float), blocks, tuple(constraints)),
        reference_solution=reference,
    )


@pytest.fixture
def empty_set_problem():
    # y0 + y1 >= 3 cannot hold on [0, 1]^2.
    infeasible = affine_constraint(0, 2, {0: -1.0, 1: -1.0}, offset=3.0, name="impossible")
    return deterministic_problem(lambda x: x, [0.0, 0.0], [1.0, 1.0], constraints=[infeasible])


@pytest.fixture
def exact_constants():
    return StrongMonotonicityData(mu=1.0, lipschitz=2.0, source=ConstantsSource.EXACT)


@pytest.fixture
def make_problem():
    return deterministic_problem
