"""Reproducible operator sampling.

Noise is generated by a counter-based Philox stream: sample ``j`` of epoch
``k`` under ``seed`` always reads the same counter blocks, so any subset of
samples can be produced independently and in any order. Batch averages are
reduced in fixed chunks summed in chunk order, which keeps them
bit-identical for every worker count.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import MAX_SEED
from .errors import ConfigError

logger = logging.getLogger(__name__)

CHUNK = 4096
_TWO_NEG_53 = 2.0**-53

SampleFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
MeanFn = Callable[[np.ndarray], np.ndarray]


def _key(seed: int, epoch: int) -> int:
    if not 0 <= seed < MAX_SEED:
        raise ConfigError("seed must be a 64-bit unsigned integer", field="seed")
    if not 0 <= epoch < MAX_SEED:
        raise ConfigError("epoch must be a nonnegative 64-bit integer", field="epoch")
    return seed + (epoch << 64)


def standard_normals(seed: int, epoch: int, start: int, count: int, width: int) -> np.ndarray:
    """Rows are samples ``start .. start + count - 1``; columns are noise channels."""
    if width == 0 or count == 0:
        return np.zeros((count, width))
    blocks = math.ceil(width / 4)
    bitgen = np.random.Philox(key=_key(seed, epoch), counter=start * blocks)
    raw = bitgen.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :width]
    uniforms = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_NEG_53
    return special.ndtri(uniforms)


@dataclass(frozen=True)
class SampleStream:
    seed: int
    epoch: int
    counter: int

    def normals(self, width: int) -> np.ndarray:
        return standard_normals(self.seed, self.epoch, self.counter, 1, width)[0]


@dataclass(frozen=True, eq=False)
class StochasticOracle:
    dim: int
    noise_width: int
    sample_fn: SampleFn
    mean_fn: MeanFn | None = None
    noise_scale_hint: float | None = None

    @property
    def has_mean(self) -> bool:
        return self.mean_fn is not None

    def mean(self, x: np.ndarray) -> np.ndarray:
        if self.mean_fn is None:
            raise ConfigError("operator has no exact mean", field="operator")
        return np.asarray(self.mean_fn(np.asarray(x, dtype=float)), dtype=float)

    def sample(self, x: np.ndarray, stream: SampleStream) -> np.ndarray:
        noise = stream.normals(self.noise_width)[None, :]
        return self.sample_fn(np.asarray(x, dtype=float), noise)[0]

    def samples(self, x: np.ndarray, seed: int, epoch: int, start: int, count: int) -> np.ndarray:
        noise = standard_normals(seed, epoch, start, count, self.noise_width)
        return self.sample_fn(np.asarray(x, dtype=float), noise)


def batch_average(
    oracle: StochasticOracle,
    x: np.ndarray,
    n: int,
    seed: int,
    epoch: int,
    *,
    workers: int = 1,
) -> np.ndarray:
    if n < 1:
        raise ConfigError(f"batch size must be >= 1, got {n}", field="n")
    if oracle.noise_width == 0:
        return oracle.samples(x, seed, epoch, 1, 1)[0]

    def chunk_sum(c: int) -> np.ndarray:
        start = 1 + c * CHUNK
        count = min(CHUNK, n - c * CHUNK)
        return oracle.samples(x, seed, epoch, start, count).sum(axis=0)

    n_chunks = math.ceil(n / CHUNK)
    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(chunk_sum, range(n_chunks)))
    else:
        partials = [chunk_sum(c) for c in range(n_chunks)]
    total = partials[0]
    for part in partials[1:]:
        total = total + part
    return total / n


@dataclass(frozen=True)
class NoiseRow:
    n: int
    mean_sq_error: float
    nu_sq_hat: float


@dataclass(frozen=True)
class NoiseDiagnostic:
    rows: list[NoiseRow]
    nu_sq_max: float
    slope: float | None

    def to_dict(self) -> dict[str, object]:
        return {
            "rows": [row.__dict__ for row in self.rows],
            "nu_sq_max": self.nu_sq_max,
            "slope": self.slope,
        }


def _replicated_batch_errors(
    oracle: StochasticOracle,
    x: np.ndarray,
    mean: np.ndarray,
    n: int,
    replications: int,
    seed: int,
    epoch: int,
) -> float:
    # Replication r of epoch uses samples r*n+1 .. (r+1)*n.
    group = max(1, 2**20 // max(1, n))
    total = 0.0
    for first in range(0, replications, group):
        reps = min(group, replications - first)
        draws = oracle.samples(x, seed, epoch, 1 + first * n, reps * n)
        averages = draws.reshape(reps, n, oracle.dim).mean(axis=1)
        total += float(np.sum((averages - mean) ** 2))
    return total / replications


def noise_diagnostic(
    oracle: StochasticOracle,
    x: np.ndarray,
    n_values: Sequence[int],
    replications: int,
    seed: int,
) -> NoiseDiagnostic:
    if replications < 1:
        raise ConfigError("replications must be >= 1", field="replications")
    x = np.asarray(x, dtype=float)
    mean = oracle.mean(x)
    rows: list[NoiseRow] = []
    for i, n in enumerate(n_values):
        if n < 1:
            raise ConfigError(f"batch size must be >= 1, got {n}", field="n_values")
        if oracle.noise_width == 0:
            err = float(np.sum((oracle.samples(x, seed, i, 1, 1)[0] - mean) ** 2))
        else:
            err = _replicated_batch_errors(oracle, x, mean, int(n), replications, seed, i)
        rows.append(NoiseRow(n=int(n), mean_sq_error=err, nu_sq_hat=n * err))
    slope = None
    usable = [r for r in rows if r.mean_sq_error > 0.0]
    if len(usable) >= 2:
        slope = float(
            np.polyfit(np.log([r.n for r in usable]), np.log([r.mean_sq_error for r in usable]), 1)[0]
        )
    nu_sq_max = max((r.nu_sq_hat for r in rows), default=0.0)
    return NoiseDiagnostic(rows=rows, nu_sq_max=nu_sq_max, slope=slope)


def probe_points(lo: np.ndarray, hi: np.ndarray, *, seed: int = 0, max_vertices: int = 256) -> list[np.ndarray]:
    """Box midpoint plus all vertices, or seeded random box points in high dimension."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    points = [0.5 * (lo + hi)]
    if 2**lo.size <= max_vertices:
        for mask in range(2**lo.size):
            bits = np.array([(mask >> i) & 1 for i in range(lo.size)], dtype=bool)
            points.append(np.where(bits, hi, lo))
    else:
        rng = np.random.default_rng(seed)
        points.extend(lo + rng.random(lo.size) * (hi - lo) for _ in range(64))
    return points


def noise_sup_estimate(
    oracle: StochasticOracle,
    lo: np.ndarray,
    hi: np.ndarray,
    *,
    replications: int = 2000,
    seed: int = 0,
) -> float:
    """Estimate nu = sup_x sqrt(E|G(x, xi) - F(x)|^2) over box probe points."""
    if oracle.noise_width == 0:
        return 0.0
    best = 0.0
    for point in probe_points(lo, hi, seed=seed):
        diag = noise_diagnostic(oracle, point, [1], replications, seed)
        best = max(best, diag.nu_sq_max)
    return math.sqrt(best)
