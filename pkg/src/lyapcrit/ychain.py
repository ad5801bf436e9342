"""Edge chain Y_{n+1} = z + h(Y_n), h(y) = y + log1p(e^-y), and its
infinite invariant measure.

The invariant CDF solves F(x) = int_{z<x} F(h^-1(x - z)) zeta(dz). With
G(u) = F(h^-1(u)) for u > 0 and 0 otherwise, the right side is the plain
convolution (G * zeta)(x), so each sweep is one FFT convolution against
the law's cell masses.
"""

from dataclasses import dataclass, field
import math

import numba as nb
import numpy as np
from scipy.signal import fftconvolve

from . import rng as streams
from .disorder import DisorderLaw, draw
from .errors import ConsistencyError, ConvergenceError
from .gridfn import Affine, EstimateCI, GridFunction, GridSpec, Zero, fit_affine_tail
from .parallel import ordered_map

DEFAULT_GRID = GridSpec(-30.0, 60.0, 0.01)


def h(y):
    y = np.asarray(y, dtype=float)
    out = np.maximum(y, 0) + np.log1p(np.exp(-np.abs(y)))
    return float(out) if out.ndim == 0 else out


def h_inv(x):
    """log(e^x - 1) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("h_inv needs x > 0")
    out = x + np.log(-np.expm1(-x))
    return float(out) if out.ndim == 0 else out


@nb.njit(cache=True, inline="always")
def _h(y):
    if y > 0:
        return y + math.log1p(math.exp(-y))
    return math.log1p(math.exp(y))


def step_y(y: float, z: float) -> float:
    return z + _h(y)


@dataclass
class YPath:
    theta: float
    n: int
    final: float
    minimum: float
    last_nonpositive: int          # last n >= 1 with Y_n <= 0, or -1
    checkpoints: np.ndarray        # rows (n, iterated Y_n, closed-form Y_n)

    @property
    def max_discrepancy(self) -> float:
        if len(self.checkpoints) == 0:
            return 0.0
        return float(np.max(np.abs(self.checkpoints[:, 1] - self.checkpoints[:, 2])))


@nb.njit(cache=True, nogil=True)
def _simulate_kernel(rng, code, param, theta, n, check_at, out):
    y = theta
    s = 0.0
    # running log of sum_{i<n} e^{-S_i}; S_0 = 0 contributes e^0
    lsum = 0.0
    ymin = theta
    last = -1
    c = 0
    for k in range(1, n + 1):
        z = draw(rng, code, param)
        y = z + _h(y)
        s += z
        if y < ymin:
            ymin = y
        if y <= 0.0:
            last = k
        if c < check_at.size and check_at[c] == k:
            a = lsum - theta
            lp = a + math.log1p(math.exp(-a)) if a > 0 else math.log1p(math.exp(a))
            out[c, 0] = k
            out[c, 1] = y
            out[c, 2] = theta + s + lp
            c += 1
        # include S_k for the next index
        t = -s
        if t > lsum:
            lsum = t + math.log1p(math.exp(lsum - t))
        else:
            lsum = lsum + math.log1p(math.exp(t - lsum))
    return y, ymin, last


def simulate_y(theta: float, law: DisorderLaw, n: int, seed: int, checkpoints=None,
               tol: float = 1e-8, stream: int = 0) -> YPath:
    """Iterate Y from theta and compare with the closed form
    Y_n = theta + S_n + log(1 + e^-theta sum_{i<n} e^-S_i) at checkpoints."""
    if checkpoints is None:
        checkpoints = np.unique(np.geomspace(1, max(n, 1), 20).astype(np.int64))
    check_at = np.asarray(sorted(set(int(c) for c in checkpoints if 1 <= c <= n)), dtype=np.int64)
    out = np.zeros((check_at.size, 3))
    r = streams.make_rng(seed, streams.YCHAIN, stream)
    y, ymin, last = _simulate_kernel(r, law.code, law.param, float(theta), int(n), check_at, out)
    path = YPath(float(theta), int(n), y, ymin, int(last), out)
    if path.max_discrepancy > tol:
        raise ConsistencyError(f"closed form and iteration differ by {path.max_discrepancy:.3g}")
    return path


# invariant measure: fixed point of the convolution sweep

@dataclass
class InvariantFit:
    F: GridFunction
    c: float
    d: float
    residual: float
    iterations: int
    law: str = ""
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    def meta(self):
        return {"c": self.c, "d": self.d, "residual": self.residual,
                "iterations": self.iterations, "law": self.law}


class EdgeSweep:
    """One application of the invariant-measure map on a fixed grid."""

    def __init__(self, law: DisorderLaw, grid: GridSpec, threshold: float = 1e-16,
                 tail_fraction: float = 0.2):
        self.law = law
        self.grid = grid
        self.x = grid.nodes()
        m, w, tail = law.cell_weights(grid.dx, threshold)
        self.m, self.w, self.tail = m, w, tail
        self.tail_mean = law.upper_tail_mean((m + 0.5) * grid.dx)
        u = grid.x_min + grid.dx * np.arange(-m, grid.n + m)
        self.pos = u > 0
        self.y = h_inv(u[self.pos])
        span = grid.x_max - grid.x_min
        self.window = (grid.x_max - tail_fraction * span, grid.x_max)

    def fit(self, values):
        f = GridFunction(self.grid.x_min, self.grid.dx, values)
        return fit_affine_tail(f, self.window)

    def apply(self, values, c, d):
        """T_Y F with F extended affinely (c, d) beyond the grid and by 0 below it."""
        g = np.zeros(self.pos.size)
        y = self.y
        val = np.interp(y, self.x, values, left=0.0)
        ext = y > self.grid.x_max
        val[ext] = c * y[ext] + d
        g[self.pos] = val
        out = fftconvolve(g, self.w, mode="valid")
        # mass of z below the truncation sees G(x - z) ~ (x - z) + d
        return out + (c * self.x + d) * self.tail + c * self.tail_mean

    def normalized(self, values):
        c, d, _ = self.fit(values)
        tv = self.apply(values, c, d)
        c2, _, _ = self.fit(tv)
        return tv / c2


def invariant_fixed_point(law: DisorderLaw, grid: GridSpec = DEFAULT_GRID, tol: float = 1e-10,
                          max_iter: int = 5000, omega: float = 0.5, memory: int = 10,
                          threshold: float = 1e-16) -> InvariantFit:
    """Invariant CDF of Y normalized to slope 1, by damped iteration with
    Anderson mixing over the last `memory` residuals."""
    if grid.x_min > -30 or grid.x_max < 60:
        raise ValueError("grid must cover at least [-30, 60]")
    sweep = EdgeSweep(law, grid, threshold)
    F = np.maximum(0.0, sweep.x + 0.5)
    xs, rs, hist = [], [], []
    res = math.inf
    for it in range(1, max_iter + 1):
        P = sweep.normalized(F)
        r = P - F
        res = float(np.max(np.abs(r)))
        hist.append(res)
        if not math.isfinite(res):
            break
        if res < tol:
            F = P
            break
        xs.append(F.copy())
        rs.append(r)
        if len(xs) > memory + 1:
            xs.pop(0)
            rs.pop(0)
        if len(xs) >= 2:
            dR = np.diff(np.array(rs), axis=0).T
            dX = np.diff(np.array(xs), axis=0).T
            coef, *_ = np.linalg.lstsq(dR, r, rcond=None)
            F = F + omega * r - (dX + omega * dR) @ coef
        else:
            F = F + omega * r
    else:
        raise ConvergenceError(f"no convergence in {max_iter} sweeps (residual {res:.3g})",
                               residual=res, iterations=max_iter)
    if not math.isfinite(res):
        raise ConvergenceError("sweep diverged", residual=res, iterations=it)
    c, d, rms = sweep.fit(F)
    Fg = GridFunction(grid.x_min, grid.dx, F, Zero(), Affine(c, d), "CDF")
    return InvariantFit(Fg, c, d, rms, it, law.spec, np.array(hist))


def stationarity_defect(fit: InvariantFit, law: DisorderLaw, threshold: float = 1e-16) -> float:
    """sup |T_Y F - F| after one normalized sweep."""
    g = GridSpec(fit.F.x0, fit.F.x_max, fit.F.dx)
    sweep = EdgeSweep(law, g, threshold)
    return float(np.max(np.abs(sweep.normalized(fit.F.values) - fit.F.values)))


def edge_fits(law: DisorderLaw, grid: GridSpec = DEFAULT_GRID, tol: float = 1e-10,
              max_iter: int = 5000):
    """Fits for z (left edge) and -z (right edge); symmetric laws share one solve."""
    left = invariant_fixed_point(law, grid, tol, max_iter)
    neg = law.negated()
    right = left if neg == law else invariant_fixed_point(neg, grid, tol, max_iter)
    return left, right


def dh_intercepts(law: DisorderLaw, grid: GridSpec = DEFAULT_GRID, tol: float = 1e-10,
                  max_iter: int = 5000):
    """Affine intercepts (c_left, c_right) of the two edge measures."""
    left, right = edge_fits(law, grid, tol, max_iter)
    return left.d, right.d


# occupation-ratio oracle

@nb.njit(cache=True, nogil=True)
def _occupation_kernel(rng, code, param, y0, n, g0, gdx, counts):
    y = y0
    m = counts.size
    for _ in range(n):
        y = draw(rng, code, param) + _h(y)
        # cell j is (node_j, node_{j+1}]
        j = math.ceil((y - g0) / gdx) - 1
        if 0 <= j < m:
            counts[j] += 1


@dataclass
class OccupationEstimate:
    """Per-chain occupation counts, normalized by the count in `window`."""
    grid: GridSpec
    counts: np.ndarray          # (chains, cells)
    window: tuple
    n_steps: int

    def _cell_range(self, x, y):
        i0 = int(round((x - self.grid.x_min) / self.grid.dx))
        i1 = int(round((y - self.grid.x_min) / self.grid.dx))
        if i0 < 0 or i1 > self.counts.shape[1] or i1 <= i0:
            raise ValueError("interval outside grid")
        return i0, i1

    def scales(self):
        a, b = self.window
        i0, i1 = self._cell_range(a, b)
        return self.counts[:, i0:i1].sum(axis=1) / (b - a)

    def interval_mass(self, x, y, level: float = 0.95) -> EstimateCI:
        """nu((x, y]) in slope-1 units, CI across independent chains."""
        i0, i1 = self._cell_range(x, y)
        per = self.counts[:, i0:i1].sum(axis=1) / self.scales()
        return EstimateCI.from_blocks(per, level)

    def cdf(self) -> GridFunction:
        """Pooled cumulative occupation with slope-1 normalization."""
        pooled = self.counts.sum(axis=0) / self.scales().sum()
        vals = np.concatenate([[0.0], np.cumsum(pooled)])
        f = GridFunction(self.grid.x_min, self.grid.dx, vals, Zero(), Zero(), "CDF")
        c, d, _ = fit_affine_tail(f, self.window)
        return GridFunction(self.grid.x_min, self.grid.dx, vals, Zero(), Affine(c, d), "CDF")


def invariant_occupation_ratio(law: DisorderLaw, grid: GridSpec = DEFAULT_GRID, n_steps: int = 10**7,
                               seed: int = 0, n_chains: int = 16, window=(10.0, 30.0),
                               threads: int = 1) -> OccupationEstimate:
    """Long Y runs from 0 binned on the grid; n_steps is the total over chains."""
    per = n_steps // n_chains

    def job(k):
        r = streams.make_rng(seed, streams.OCCUPATION, k)
        c = np.zeros(grid.n - 1, dtype=np.int64)
        _occupation_kernel(r, law.code, law.param, 0.0, per, grid.x_min, grid.dx, c)
        return c

    counts = np.array(ordered_map(job, range(n_chains), threads))
    return OccupationEstimate(grid, counts, tuple(window), per * n_chains)
