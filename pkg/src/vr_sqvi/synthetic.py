from __future__ import annotations

import math

import numpy as np

from .config import ConstantsSource, StrongMonotonicityData
from .errors import ConfigError
from .problem import QviProblem
from .sets import MovingSet
from .stochastic import StochasticOracle


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def make_synthetic(
    dim: int,
    mu: float,
    lipschitz: float,
    seed: int,
    *,
    nu: float = 0.0,
) -> QviProblem:
    """Affine strongly monotone instance F(x) = A (x - x_hat) on a fixed box.

    A = R' diag(linspace(mu, L)) R, the box strictly contains x_hat, so x_hat
    is the solution. Samples add Gaussian noise with per-coordinate standard
    deviation nu / sqrt(dim), making E|G - F|^2 = nu^2 exactly.
    """
    if dim < 1:
        raise ConfigError("dim must be >= 1", field="synthetic.dim")
    if not 0 < mu <= lipschitz:
        raise ConfigError(f"need 0 < mu <= lipschitz, got mu={mu}, L={lipschitz}", field="synthetic.mu")
    if nu < 0:
        raise ConfigError("nu must be nonnegative", field="synthetic.nu")
    rng = np.random.default_rng(seed)
    rotation = random_rotation(dim, rng)
    matrix = rotation.T @ np.diag(np.linspace(mu, lipschitz, dim)) @ rotation
    matrix = 0.5 * (matrix + matrix.T)
    x_hat = rng.uniform(-1.0, 1.0, dim)
    lo = x_hat - rng.uniform(1.0, 2.0, dim)
    hi = x_hat + rng.uniform(1.0, 2.0, dim)
    scale = nu / math.sqrt(dim)

    def mean_fn(x: np.ndarray) -> np.ndarray:
        return matrix @ (x - x_hat)

    def sample_fn(x: np.ndarray, normals: np.ndarray) -> np.ndarray:
        base = mean_fn(x)[None, :]
        if normals.shape[1] == 0:
            return np.repeat(base, normals.shape[0], axis=0)
        return base + scale * normals

    oracle = StochasticOracle(
        dim=dim,
        noise_width=dim if nu > 0 else 0,
        sample_fn=sample_fn,
        mean_fn=mean_fn,
        noise_scale_hint=nu,
    )
    constants = StrongMonotonicityData(
        mu=mu, lipschitz=lipschitz, gamma=0.0, nu=nu, inner_c=0.0, source=ConstantsSource.EXACT
    )
    return QviProblem(
        dim=dim,
        operator=oracle,
        moving_set=MovingSet.box_only(lo, hi),
        reference_solution=x_hat,
        name=f"synthetic(dim={dim},mu={mu:g},L={lipschitz:g},nu={nu:g},seed={seed})",
        constants=constants,
        affine=True,
    )
