"""Edge-measure approximation of the X chain's invariant law.

The two edge CDFs F_left (law of z) and F_right (law of -z) are glued at
+-gamma into a risk function
    G(x) = F_right(gamma - x) / C             for x >= 0,
    G(x) = 1 - F_left(x + gamma) / C          for x <= 0,
with C = F_left(gamma) + F_right(gamma). The Lyapunov exponent is then
2 kappa1 / C with kappa1 = 1/2 int F(y) / (1 + e^y) dy, and
C ~ 2 gamma + 2 kappa2 with kappa2 the mean edge intercept.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import expit

from .errors import ConsistencyError, ContractError
from .gridfn import Affine, Constant, EstimateCI, GridFunction, GridSpec, Zero
from .projective import _log1pexp, operator_grid
from .ychain import InvariantFit


@dataclass(frozen=True)
class DhConstants:
    kappa1: float
    kappa2: float
    C_gamma: float
    gamma: float
    law: str = ""

    def as_dict(self):
        return {"kappa1": self.kappa1, "kappa2": self.kappa2, "C_gamma": self.C_gamma,
                "gamma": self.gamma, "law": self.law}


def _check_slope(fit: InvariantFit, tol=1e-3):
    if abs(fit.c - 1) > tol:
        raise ContractError(f"edge fit slope {fit.c} is not normalized to 1")


def build_gamma_probability(gamma: float, fit_left: InvariantFit, fit_right: InvariantFit,
                            grid: GridSpec | None = None):
    """Risk function of the glued probability on `grid`, and C_gamma."""
    _check_slope(fit_left)
    _check_slope(fit_right)
    if grid is None:
        grid = operator_grid(gamma, fit_left.F.dx)
    C = fit_left.F.eval(gamma) + fit_right.F.eval(gamma)
    x = grid.nodes()
    g = np.where(x >= 0, fit_right.F.eval(gamma - x) / C, 1.0 - fit_left.F.eval(x + gamma) / C)
    return GridFunction(grid.x_min, grid.dx, g, Constant(1.0), Zero(), "Risk"), float(C)


def _tail_integral(X: float, d: float) -> float:
    """int_X^inf (y + d) / (1 + e^y) dy for the slope-1 extension, as the series
    sum_k (-1)^(k+1) e^(-kX) ((X + d)/k + 1/k^2), cut at 1e-14."""
    if X <= 0:
        raise ValueError("tail series needs X > 0")
    total = 0.0
    k = 1
    while True:
        t = math.exp(-k * X) * ((X + d) / k + 1.0 / k ** 2)
        total += t if k % 2 else -t
        if abs(t) < 1e-14 * max(1.0, abs(total)) or k > 10_000:
            break
        k += 1
    return total


def kappa1_from_edge(fit: InvariantFit) -> float:
    """1/2 int F(y) / (1 + e^y) dy with the affine tail added analytically."""
    F = fit.F
    y = F.nodes()
    core = np.trapezoid(F.values * expit(-y), y)
    ext = F.right_ext
    if not isinstance(ext, Affine):
        raise ContractError("edge fit needs an affine right extension")
    # tail with the fitted slope: c * int (y + d/c) w(y) dy
    tail = ext.slope * _tail_integral(F.x_max, ext.intercept / ext.slope)
    return 0.5 * float(core + tail)


def _log_tail_integral(X: float) -> float:
    """int_X^inf log1p(e^-y) dy = sum_k (-1)^(k+1) e^(-kX) / k^2."""
    total = 0.0
    k = 1
    while True:
        t = math.exp(-k * X) / k ** 2
        total += t if k % 2 else -t
        if t < 1e-14 * max(1.0, abs(total)) or k > 10_000:
            break
        k += 1
    return total


def kappa1_from_measure(fit: InvariantFit) -> float:
    """1/2 int log(1 + e^-y) dF(y), a Stieltjes sum over grid cells (midpoint
    weights) with the affine tail integrated analytically. Equal to
    kappa1_from_edge after integration by parts, but a separate quadrature."""
    F = fit.F
    ext = F.right_ext
    if not isinstance(ext, Affine):
        raise ContractError("edge fit needs an affine right extension")
    y = F.nodes()
    mid = 0.5 * (y[:-1] + y[1:])
    core = np.dot(np.log1p(np.exp(-mid)), np.diff(F.values))
    # mass to the left of the grid sits at x0 at worst
    left = F.values[0] * float(_log1pexp(-F.x0))
    tail = ext.slope * _log_tail_integral(F.x_max)
    return 0.5 * float(core + left + tail)


def kappa2_from_intercepts(c_left: float, c_right: float) -> float:
    return 0.5 * (c_left + c_right)


def L_functional(gamma: float, G: GridFunction) -> float:
    """int G(x) / (1 + e^(gamma - x)) dx for a risk function G."""
    if G.right_limit != 0:
        raise ContractError("L functional needs G(+inf) = 0")
    x = G.nodes()
    core = np.trapezoid(G.values * expit(x - gamma), x)
    # constant left extension: int_-inf^x0 c w = c log1p(e^(x0 - gamma))
    left = G.left_limit * float(_log1pexp(G.x0 - gamma))
    return float(core + left)


def L_star_functional(gamma: float, F: GridFunction) -> float:
    """int F(x) / (1 + e^(gamma + x)) dx for a cumulative function F."""
    if F.left_limit != 0:
        raise ContractError("dual L functional needs F(-inf) = 0")
    x = F.nodes()
    core = np.trapezoid(F.values * expit(-x - gamma), x)
    right = F.right_limit * float(_log1pexp(-F.x_max - gamma))
    return float(core + right)


def risk_to_cdf(G: GridFunction) -> GridFunction:
    lo = G.left_limit
    return GridFunction(G.x0, G.dx, lo - G.values, Zero(), Constant(lo), "CDF")


def dh_constants(gamma: float, fit_left: InvariantFit, fit_right: InvariantFit,
                 law: str = "") -> DhConstants:
    k1 = kappa1_from_edge(fit_right)
    k2 = kappa2_from_intercepts(fit_left.d, fit_right.d)
    C = fit_left.F.eval(gamma) + fit_right.F.eval(gamma)
    return DhConstants(k1, k2, float(C), float(gamma), law or fit_left.law)


def lyapunov_dh(gamma: float, fits, constants: DhConstants | None = None,
                grid_tol: float = 1e-8) -> float:
    """2 kappa1 / C_gamma, cross-checked against the L functional of the
    glued risk function (they differ by O(e^(-gamma/2)) at most)."""
    fit_left, fit_right = fits
    if constants is None:
        constants = dh_constants(gamma, fit_left, fit_right)
    value = 2 * constants.kappa1 / constants.C_gamma
    G, C = build_gamma_probability(gamma, fit_left, fit_right)
    direct = L_functional(gamma, G)
    tol = 2 * math.exp(-gamma / 2) + grid_tol
    if abs(direct - value) > tol:
        raise ConsistencyError(f"L functional {direct} vs 2 kappa1 / C = {value}")
    return value


@dataclass(frozen=True)
class KappaFit:
    kappa1: float
    kappa2: float
    se1: float
    se2: float
    slope: float
    intercept: float
    chi2: float

    def as_dict(self):
        return {"kappa1": self.kappa1, "kappa2": self.kappa2, "kappa1_se": self.se1,
                "kappa2_se": self.se2, "slope": self.slope, "intercept": self.intercept,
                "chi2": self.chi2}


def fit_kappas_from_sweep(gammas, estimates, max_rel_ci: float | None = 0.02) -> KappaFit:
    """Weighted least squares of 1/L against gamma: slope 1/kappa1,
    intercept kappa2/kappa1. Accepts EstimateCI values or plain floats."""
    g = np.asarray(gammas, dtype=float)
    if np.unique(g).size < 4:
        raise ValueError("need at least four distinct gamma values")
    val = np.array([e.value if isinstance(e, EstimateCI) else float(e) for e in estimates])
    se = np.array([e.std_error if isinstance(e, EstimateCI) else 0.0 for e in estimates])
    if np.any(val <= 0):
        raise ValueError("Lyapunov estimates must be positive")
    if max_rel_ci is not None:
        for e in estimates:
            if isinstance(e, EstimateCI) and e.rel_half_width > max_rel_ci:
                raise ValueError(f"estimate {e.value} has relative CI {e.rel_half_width:.3g} > {max_rel_ci}")
    y = 1.0 / val
    sy = se / val ** 2
    w = np.ones_like(y) if np.any(sy == 0) else 1.0 / sy ** 2
    A = np.vstack([np.ones_like(g), g]).T
    Aw = A * w[:, None]
    cov = np.linalg.inv(A.T @ Aw)
    a, b = cov @ (Aw.T @ y)
    resid = y - (a + b * g)
    chi2 = float(np.sum(w * resid ** 2))
    if np.any(sy == 0):
        # unweighted: scale covariance by residual variance
        dof = max(len(g) - 2, 1)
        cov = cov * chi2 / dof
    k1 = 1.0 / b
    k2 = a / b
    # delta method
    j1 = np.array([0.0, -1.0 / b ** 2])
    j2 = np.array([1.0 / b, -a / b ** 2])
    se1 = float(math.sqrt(max(j1 @ cov @ j1, 0.0)))
    se2 = float(math.sqrt(max(j2 @ cov @ j2, 0.0)))
    return KappaFit(float(k1), float(k2), se1, se2, float(b), float(a), chi2)
