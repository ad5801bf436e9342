"""Projective action h_g (g = gamma), the X chain and the Furstenberg estimators.

X_{n+1} = z_{n+1} + h_g(X_n) with
h_g(x) = x - log1p(e^(x-g)) + log1p(e^(-x-g)).
The Lyapunov exponent is the stationary mean of f(x) = log1p(e^(x-g)),
and equally of f*(x) = log1p(e^(-x-g)).
"""

from dataclasses import dataclass, replace
import math

import numba as nb
import numpy as np

from . import rng as streams
from .disorder import DisorderLaw, draw
from .errors import ConvergenceError
from .gridfn import Constant, EstimateCI, GridFunction, GridSpec, Zero
from .matprod import n_gamma_sigma
from .parallel import ordered_map


def _log1pexp(x):
    """log(1 + e^x) without overflow."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0))))


def _log_expm1(a):
    """log(e^a - 1) for a > 0, stable at both ends."""
    a = np.asarray(a, dtype=float)
    return a + np.log(-np.expm1(-a))


def h_gamma(gamma, x):
    x = np.asarray(x, dtype=float)
    # x - log1p(e^(x-g)) = g - log1p(e^(g-x)) avoids cancellation for large x
    a = np.abs(x)
    out = np.sign(x) * (gamma + (_log1pexp(-a - gamma) - _log1pexp(gamma - a)))
    return float(out) if out.ndim == 0 else out


def h_gamma_inv(gamma, y):
    """Inverse of h_gamma on (-gamma, gamma)."""
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) >= gamma):
        raise ValueError("h_gamma_inv needs |y| < gamma")
    out = -gamma + _log_expm1(y + gamma) - np.log1p(-np.exp(y - gamma))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class XChainConfig:
    gamma: float
    law: DisorderLaw
    n_steps: int            # recorded steps per block (after burn-in)
    burnin: int | None = None
    seed: int = 0
    x0: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.burnin is None:
            object.__setattr__(self, "burnin", default_burnin(self.gamma, self.law))
        if self.burnin >= self.n_steps:
            raise ValueError("burnin must be smaller than n_steps")


def default_burnin(gamma, law: DisorderLaw) -> int:
    """Ten contraction scales n_{gamma,sigma}."""
    return 10 * n_gamma_sigma(gamma, law.sigma)


@nb.njit(cache=True, nogil=True)
def _furstenberg_kernel(rng, code, param, gamma, x0, burnin, n):
    x = x0
    for _ in range(burnin):
        a = math.log1p(math.exp(x - gamma))
        b = math.log1p(math.exp(-x - gamma))
        x = draw(rng, code, param) + x - a + b
    s = 0.0
    s_star = 0.0
    for _ in range(n):
        a = math.log1p(math.exp(x - gamma))
        b = math.log1p(math.exp(-x - gamma))
        s += a
        s_star += b
        x = draw(rng, code, param) + x - a + b
    return s / n, s_star / n


def furstenberg_blocks(cfg: XChainConfig, blocks, threads: int = 1):
    """(L, L*) per block; block k is an independent chain on stream k."""
    def job(k):
        r = streams.make_rng(cfg.seed, streams.XCHAIN, k)
        return _furstenberg_kernel(r, cfg.law.code, cfg.law.param, float(cfg.gamma),
                                   float(cfg.x0), int(cfg.burnin), int(cfg.n_steps))
    return np.array(ordered_map(job, blocks, threads)).reshape(-1, 2)


def lyapunov_furstenberg(cfg: XChainConfig, n_blocks: int, threads: int = 1, level: float = 0.95):
    """Ergodic averages of f and f* along the X chain, as (L, L*) estimates."""
    v = furstenberg_blocks(cfg, range(n_blocks), threads)
    return EstimateCI.from_blocks(v[:, 0], level), EstimateCI.from_blocks(v[:, 1], level)


def furstenberg_to_precision(cfg: XChainConfig, rel_half_width: float = 0.01, n_blocks: int = 16,
                             max_blocks: int = 4096, threads: int = 1, level: float = 0.95):
    """Double the number of blocks until the L estimate's CI half-width is
    at most rel_half_width of its value. Earlier blocks are reused, so the
    result is a deterministic function of the inputs."""
    v = furstenberg_blocks(cfg, range(n_blocks), threads)
    while True:
        est = EstimateCI.from_blocks(v[:, 0], level)
        if est.rel_half_width <= rel_half_width:
            return est, EstimateCI.from_blocks(v[:, 1], level)
        k = len(v)
        if 2 * k > max_blocks:
            raise ConvergenceError(
                f"relative half-width {est.rel_half_width:.3g} after {k} blocks",
                residual=est.rel_half_width, iterations=k)
        v = np.vstack([v, furstenberg_blocks(cfg, range(k, 2 * k), threads)])


@nb.njit(cache=True, nogil=True)
def _histogram_kernel(rng, code, param, gamma, x0, burnin, n, g0, gdx, counts):
    x = x0
    m = counts.size
    for i in range(burnin + n):
        a = math.log1p(math.exp(x - gamma))
        b = math.log1p(math.exp(-x - gamma))
        x = draw(rng, code, param) + x - a + b
        if i >= burnin:
            # counts[j] collects samples in (node_{j-1}, node_j]
            j = math.ceil((x - g0) / gdx)
            if j < 0:
                j = 0
            if j >= m:
                j = m - 1
            counts[j] += 1


def x_samples_histogram(cfg: XChainConfig, grid: GridSpec, n_chains: int = 1, threads: int = 1):
    """Counts of post-burn-in X values per grid cell, one row per chain.
    Column j holds (node_{j-1}, node_j]; the last column is an overflow bin."""
    def job(k):
        r = streams.make_rng(cfg.seed, streams.XCHAIN, 1_000_000 + k)
        c = np.zeros(grid.n + 1, dtype=np.int64)
        _histogram_kernel(r, cfg.law.code, cfg.law.param, float(cfg.gamma), float(cfg.x0),
                          int(cfg.burnin), int(cfg.n_steps), grid.x_min, grid.dx, c)
        return c
    return np.array(ordered_map(job, range(n_chains), threads))


def empirical_cdf_x(cfg: XChainConfig, grid: GridSpec, n_chains: int = 1, threads: int = 1) -> GridFunction:
    """Empirical CDF of the X chain on the grid nodes."""
    lo, hi = -cfg.gamma - 10, cfg.gamma + 10
    if grid.x_min > lo or grid.x_max < hi:
        raise ValueError(f"grid must cover [{lo}, {hi}]")
    counts = x_samples_histogram(cfg, grid, n_chains, threads).sum(axis=0)
    cdf = np.cumsum(counts[:-1]) / counts.sum()
    return GridFunction(grid.x_min, grid.dx, cdf, Zero(), Constant(1.0), "CDF")


def operator_grid(gamma, dx: float = 0.01, pad: float = 40.0) -> GridSpec:
    """Default operator grid [-gamma - pad, gamma + pad] with 0 on a node."""
    k = int(math.ceil((gamma + pad) / dx))
    return GridSpec(-k * dx, k * dx, dx)


def with_steps(cfg: XChainConfig, n_steps: int) -> XChainConfig:
    return replace(cfg, n_steps=n_steps)
