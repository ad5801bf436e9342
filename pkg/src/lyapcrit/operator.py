"""Transfer operator of the X chain on risk and cumulative functions.

For the risk function G of X, the risk function of z + h_g(X) (g = gamma) is the
convolution of the law of z with
    G~(u) = G(-inf)          for u <= -g,
            G(h_g^-1(u))     for |u| < g,
            0                for u >= g.
The boundary-free version T0 uses 0 on both sides. All three variants are
one FFT convolution against the law's cell masses.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.signal import fftconvolve

from .disorder import DisorderLaw
from .errors import ContractError
from .gridfn import Constant, GridFunction, GridSpec, Zero, _abs_linear_integral, l1_distance
from .matprod import n_gamma_sigma
from .projective import h_gamma_inv, operator_grid


@dataclass
class OperatorConfig:
    gamma: float
    law: DisorderLaw
    grid: GridSpec | None = None
    threshold: float = 1e-16
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.grid is None:
            self.grid = operator_grid(self.gamma)
        g = self.grid
        if g.x_min > -self.gamma - 30 or g.x_max < self.gamma + 30:
            raise ValueError(f"operator grid must cover [-gamma-30, gamma+30] for gamma={self.gamma}")

    def _setup(self):
        if "w" not in self._cache:
            g = self.grid
            m, w, _ = self.law.cell_weights(g.dx, self.threshold)
            edge = (m + 0.5) * g.dx
            u = g.x_min + g.dx * np.arange(-m, g.n + m)
            left = u <= -self.gamma
            right = u >= self.gamma
            mid = ~(left | right)
            self._cache.update(
                m=m, w=w, up=float(self.law.sf(edge)), down=float(self.law.cdf(-edge)),
                left=left, right=right, mid=mid, y=h_gamma_inv(self.gamma, u[mid]),
                x=g.nodes())
        return self._cache

    def apply_values(self, fn, left_val: float, right_val: float) -> np.ndarray:
        """Node values of the convolution for an input evaluator fn."""
        c = self._setup()
        gt = np.empty(c["mid"].size)
        gt[c["left"]] = left_val
        gt[c["right"]] = right_val
        gt[c["mid"]] = fn(c["y"])
        out = fftconvolve(gt, c["w"], mode="valid")
        # z beyond the truncation lands in the flat parts of G~
        return out + c["up"] * left_val + c["down"] * right_val


def apply_T_risk(cfg: OperatorConfig, G: GridFunction) -> GridFunction:
    """Risk function of z + h_gamma(X) from the risk function of X."""
    g0 = G.left_limit
    if G.right_limit != 0 or not math.isfinite(g0):
        raise ContractError("risk input must tend to a finite value at -inf and 0 at +inf")
    v = cfg.apply_values(G.eval, g0, 0.0)
    gs = cfg.grid
    return GridFunction(gs.x_min, gs.dx, v, Constant(g0), Zero(), "Risk" if G.role == "Risk" else "Signed")


def apply_T_cdf(cfg: OperatorConfig, F: GridFunction) -> GridFunction:
    """Cumulative function of z + h_gamma(X) from the cumulative function of X."""
    f_inf = F.right_limit
    if F.left_limit != 0 or not math.isfinite(f_inf):
        raise ContractError("cumulative input must tend to 0 at -inf and a finite value at +inf")
    v = cfg.apply_values(F.eval, 0.0, f_inf)
    gs = cfg.grid
    return GridFunction(gs.x_min, gs.dx, v, Zero(), Constant(f_inf), "CDF" if F.role == "CDF" else "Signed")


def apply_T0(cfg: OperatorConfig, G: GridFunction, check: bool = True, rtol: float = 1e-9) -> GridFunction:
    """Boundary-free operator on integrable G (limits 0 at both ends)."""
    if G.left_limit != 0 or G.right_limit != 0:
        raise ContractError("T0 needs an integrable input with zero limits")
    v = cfg.apply_values(G.eval, 0.0, 0.0)
    gs = cfg.grid
    out = GridFunction(gs.x_min, gs.dx, v, Zero(), Zero(), "Signed")
    if check:
        n_in = l1_norm(G)
        n_out = l1_norm(out)
        if n_out > n_in * (1 + rtol) + 1e-300:
            raise ContractError(f"||T0 G||_1 = {n_out:.17g} exceeds ||G||_1 = {n_in:.17g}")
    return out


def l1_norm(G: GridFunction) -> float:
    v = G.values
    if G.left_limit != 0 or G.right_limit != 0:
        raise ContractError("L1 norm needs zero limits")
    return float(_abs_linear_integral(v[:-1], v[1:], G.dx).sum())


def one_step_distance(cfg: OperatorConfig, G: GridFunction) -> float:
    """||T_G G - G||_1 for a risk function G."""
    return l1_distance(apply_T_risk(cfg, G), G)


def point_mass_risk(grid: GridSpec, a: float) -> GridFunction:
    """Risk function 1{x < a} of a point mass at a, sampled on the grid."""
    x = grid.nodes()
    return GridFunction(grid.x_min, grid.dx, (x < a).astype(float), Constant(1.0), Zero(), "Risk")


@dataclass
class GeometricSum:
    terms: np.ndarray           # ||T0^n G||_1 for n = 0..n_max
    partial_sums: np.ndarray
    bound: float
    norm: float

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])

    def last_decile_fraction(self) -> float:
        n = self.terms.size
        k = n - max(1, n // 10)
        return float(self.terms[k:].sum() / self.total)

    def envelope_ok(self, rtol: float = 1e-9) -> bool:
        """Every term is at most ||G||_1."""
        return bool(np.all(self.terms <= self.norm * (1 + rtol)))


def geometric_sum_check(cfg: OperatorConfig, G: GridFunction, n_max: int | None = None) -> GeometricSum:
    """Partial sums of ||T0^n G||_1 and the bound (75/sigma^2) gamma^2 ||G||_1."""
    sigma2 = cfg.law.variance()
    if n_max is None:
        n_max = 3 * n_gamma_sigma(cfg.gamma, math.sqrt(sigma2))
    gs = cfg.grid
    if G.left_limit != 0 or G.right_limit != 0:
        raise ContractError("geometric sum needs an integrable input")
    norm = l1_norm(G)
    terms = np.empty(n_max + 1)
    terms[0] = norm
    x = gs.nodes()
    # iterate on raw node arrays of the operator grid
    cur = G.eval(x)
    xp = np.arange(gs.n, dtype=float)
    for n in range(1, n_max + 1):
        vals = cur
        cur = cfg.apply_values(lambda y: np.interp((y - gs.x_min) / gs.dx, xp, vals, left=0.0, right=0.0), 0.0, 0.0)
        terms[n] = float(_abs_linear_integral(cur[:-1], cur[1:], gs.dx).sum())
    bound = 75.0 / sigma2 * cfg.gamma ** 2 * norm
    return GeometricSum(terms, np.cumsum(terms), bound, norm)
