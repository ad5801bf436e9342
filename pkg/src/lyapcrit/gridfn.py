"""Piecewise-linear functions on uniform grids, L1 distances and CI records."""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy import stats

from .errors import ContractError


@dataclass(frozen=True)
class Zero:
    def value(self, x):
        return np.zeros_like(x, dtype=float)


@dataclass(frozen=True)
class Constant:
    v: float

    def value(self, x):
        return np.full_like(x, self.v, dtype=float)


@dataclass(frozen=True)
class Affine:
    slope: float
    intercept: float

    def value(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.intercept


def _limit(ext):
    """(constant level, slope) of an extension."""
    if isinstance(ext, Zero):
        return 0.0, 0.0
    if isinstance(ext, Constant):
        return ext.v, 0.0
    return ext.intercept, ext.slope


ROLES = ("CDF", "Risk", "Signed")


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    dx: float

    @property
    def n(self) -> int:
        return int(round((self.x_max - self.x_min) / self.dx)) + 1

    def nodes(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values on x0 + i*dx, linear in between, extension rules outside."""
    x0: float
    dx: float
    values: np.ndarray
    left_ext: object = field(default_factory=Zero)
    right_ext: object = field(default_factory=Zero)
    role: str = "Signed"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need at least two nodes")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x_max(self) -> float:
        return self.x0 + (self.n - 1) * self.dx

    def nodes(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.n)

    @property
    def left_limit(self) -> float:
        lvl, slope = _limit(self.left_ext)
        return lvl if slope == 0 else math.copysign(math.inf, -slope)

    @property
    def right_limit(self) -> float:
        lvl, slope = _limit(self.right_ext)
        return lvl if slope == 0 else math.copysign(math.inf, slope)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        xa = np.asarray(x, dtype=float)
        t = (xa - self.x0) / self.dx
        out = np.interp(t, np.arange(self.n, dtype=float), self.values)
        lo = t < 0
        hi = t > self.n - 1
        if np.any(lo):
            out = np.where(lo, self.left_ext.value(xa), out)
        if np.any(hi):
            out = np.where(hi, self.right_ext.value(xa), out)
        return float(out) if np.ndim(x) == 0 else out

    def with_values(self, values, **kw):
        return replace(self, values=np.asarray(values, dtype=float), **kw)

    def edge_gaps(self):
        """Jumps between the extensions and the boundary node values."""
        left = float(self.left_ext.value(np.array([self.x0]))[0]) - self.values[0]
        right = float(self.right_ext.value(np.array([self.x_max]))[0]) - self.values[-1]
        return left, right

    def integral(self) -> float:
        """Integral over the grid (trapezoid, exact for the interpolant)."""
        return float(np.trapezoid(self.values, dx=self.dx))

    def __sub__(self, other):
        if not _same_grid(self, other):
            raise ValueError("subtraction needs identical grids")
        lo_a, sa = _limit(self.left_ext)
        lo_b, sb = _limit(other.left_ext)
        hi_a, ta = _limit(self.right_ext)
        hi_b, tb = _limit(other.right_ext)
        left = Constant(lo_a - lo_b) if sa == sb == 0 else Affine(sa - sb, lo_a - lo_b)
        right = Constant(hi_a - hi_b) if ta == tb == 0 else Affine(ta - tb, hi_a - hi_b)
        return GridFunction(self.x0, self.dx, self.values - other.values, left, right, "Signed")


def _same_grid(f, g) -> bool:
    return f.n == g.n and f.x0 == g.x0 and f.dx == g.dx


def _abs_linear_integral(a, b, h):
    """Exact integral of |linear| over segments with end values a, b and widths h."""
    same = a * b >= 0
    aa, ab = np.abs(a), np.abs(b)
    s = aa + ab
    cross = np.divide(a * a + b * b, 2 * s, out=np.zeros_like(s), where=s > 0)
    return np.where(same, 0.5 * (aa + ab), cross) * h


def l1_distance(f: GridFunction, g: GridFunction, tol: float = 1e-9) -> float:
    """Integral of |f - g| over the real line.

    Exact for the piecewise-linear interpolants: segments of the union grid
    are split at sign changes, and outside both grids the extensions must
    agree (otherwise the difference is not integrable).
    """
    for side in (0, 1):
        ext_f = _limit(f.left_ext if side == 0 else f.right_ext)
        ext_g = _limit(g.left_ext if side == 0 else g.right_ext)
        if abs(ext_f[1] - ext_g[1]) > tol or abs(ext_f[0] - ext_g[0]) > tol:
            raise ContractError(
                "l1_distance: extensions differ at "
                + ("-inf" if side == 0 else "+inf")
                + f" ({ext_f} vs {ext_g}); difference not integrable")
    if _same_grid(f, g):
        d = f.values - g.values
        return float(_abs_linear_integral(d[:-1], d[1:], f.dx).sum())
    x = np.union1d(f.nodes(), g.nodes())
    a, b = x[:-1], x[1:]
    d0 = _inner(f, a, b, 0) - _inner(g, a, b, 0)
    d1 = _inner(f, a, b, 1) - _inner(g, a, b, 1)
    return float(_abs_linear_integral(d0, d1, b - a).sum())


def _inner(f: GridFunction, a, b, end):
    """Values at segment ends taken from inside each segment, so jumps between
    the boundary nodes and the extensions are not smeared across a cell."""
    x = a if end == 0 else b
    mid = 0.5 * (a + b)
    t = (x - f.x0) / f.dx
    out = np.interp(t, np.arange(f.n, dtype=float), f.values)
    eps = 1e-9 * f.dx
    out = np.where(mid < f.x0 - eps, f.left_ext.value(x), out)
    return np.where(mid > f.x_max + eps, f.right_ext.value(x), out)


def fit_affine_tail(f: GridFunction, window):
    """Least-squares (c, d, rms residual) of f(x) ~ c x + d over window nodes."""
    a, b = float(window[0]), float(window[1])
    eps = 1e-9 * f.dx
    if a < f.x0 - eps or b > f.x_max + eps or b <= a:
        raise ValueError(f"window [{a}, {b}] outside grid [{f.x0}, {f.x_max}]")
    if b - a < 10 * f.dx - eps:
        raise ValueError("window must span at least 10 grid steps")
    i0 = int(math.ceil((a - f.x0) / f.dx - 1e-9))
    i1 = int(math.floor((b - f.x0) / f.dx + 1e-9))
    x = f.x0 + f.dx * np.arange(i0, i1 + 1)
    y = f.values[i0:i1 + 1]
    xc = x - x.mean()
    c = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    d = float(y.mean() - c * x.mean())
    res = y - (c * x + d)
    return c, d, float(np.sqrt(np.mean(res * res)))


@dataclass(frozen=True)
class EstimateCI:
    """Point estimate with batch-means standard error."""
    value: float
    std_error: float
    n_blocks: int
    level: float = 0.95

    @classmethod
    def from_blocks(cls, blocks, level: float = 0.95):
        b = np.asarray(blocks, dtype=float)
        if b.size < 2:
            raise ValueError("need at least two blocks")
        return cls(float(b.mean()), float(b.std(ddof=1) / math.sqrt(b.size)), int(b.size), level)

    @property
    def z(self) -> float:
        return float(stats.norm.ppf(0.5 + 0.5 * self.level))

    @property
    def half_width(self) -> float:
        return self.z * self.std_error

    @property
    def interval(self):
        return self.value - self.half_width, self.value + self.half_width

    @property
    def rel_half_width(self) -> float:
        return self.half_width / abs(self.value) if self.value != 0 else math.inf

    def agrees_with(self, other, slack: float = 0.0) -> bool:
        """|a - b| within the combined CI, plus an optional absolute slack."""
        if isinstance(other, EstimateCI):
            se = math.hypot(self.std_error, other.std_error)
            return abs(self.value - other.value) <= self.z * se + slack
        return abs(self.value - float(other)) <= self.half_width + slack

    def as_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "n_blocks": self.n_blocks, "level": self.level}
