"""Centered disorder laws for z = log Z.

Five symmetric families with densities: Gaussian, logistic, Laplace,
uniform and a symmetric power tail with density (b/2)(1+|x|)^(-b-1).
Sampling goes through one jitted routine so Python-level draws and the
Monte Carlo kernels consume a Philox stream identically.
"""

from dataclasses import dataclass
import math

import numba as nb
import numpy as np
from scipy import special

GAUSSIAN, LOGISTIC, LAPLACE, UNIFORM, POWERTAIL = range(5)
_NAMES = {"gaussian": GAUSSIAN, "logistic": LOGISTIC, "laplace": LAPLACE,
          "uniform": UNIFORM, "powertail": POWERTAIL}
_PARAM = {GAUSSIAN: "sigma", LOGISTIC: None, LAPLACE: "b", UNIFORM: "hw",
          POWERTAIL: "beta"}


@nb.njit(cache=True, nogil=True)
def draw(rng, code, param):
    """One draw of z; shared by every kernel."""
    if code == GAUSSIAN:
        return param * rng.standard_normal()
    if code == LOGISTIC:
        return rng.logistic(0.0, 1.0)
    if code == LAPLACE:
        return rng.laplace(0.0, param)
    if code == UNIFORM:
        return param * (2.0 * rng.random() - 1.0)
    # power tail by inverse cdf; p = 0 has probability 2^-53, redraw
    p = rng.random()
    while p == 0.0:
        p = rng.random()
    if p >= 0.5:
        return (2.0 * (1.0 - p)) ** (-1.0 / param) - 1.0
    return 1.0 - (2.0 * p) ** (-1.0 / param)


@nb.njit(cache=True, nogil=True)
def _fill(rng, code, param, out):
    for i in range(out.size):
        out[i] = draw(rng, code, param)


@dataclass(frozen=True)
class TailClass:
    kind: str      # "polynomial", "exponential" or "compact"
    value: float   # moment exponent bound, exponential rate, or support radius

    def moment_finite(self, xi: float) -> bool:
        """Whether E|z|^xi is finite."""
        if self.kind == "polynomial":
            return xi < self.value
        return True


@dataclass(frozen=True)
class DisorderLaw:
    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in _NAMES:
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind == "logistic":
            object.__setattr__(self, "param", 1.0)
        if not (self.param > 0 and math.isfinite(self.param)):
            raise ValueError(f"{self.kind}: parameter must be positive and finite")
        if self.kind == "powertail" and self.param <= 2:
            raise ValueError("powertail needs beta > 2 for a finite variance")

    # constructors
    @classmethod
    def gaussian(cls, sigma=1.0):
        return cls("gaussian", float(sigma))

    @classmethod
    def logistic(cls):
        return cls("logistic", 1.0)

    @classmethod
    def laplace(cls, b=1.0):
        return cls("laplace", float(b))

    @classmethod
    def uniform(cls, hw=1.0):
        return cls("uniform", float(hw))

    @classmethod
    def powertail(cls, beta=7.0):
        return cls("powertail", float(beta))

    @property
    def code(self) -> int:
        return _NAMES[self.kind]

    @property
    def spec(self) -> str:
        name = _PARAM[self.code]
        return self.kind if name is None else f"{self.kind}:{name}={self.param!r}"

    def __str__(self):
        return self.spec

    def negated(self) -> "DisorderLaw":
        """Law of -z. Every shipped family is symmetric, so this is the same law."""
        return self

    @property
    def symmetric(self) -> bool:
        return True

    # analytic functionals
    def density(self, x):
        x = np.asarray(x, dtype=float)
        p = self.param
        if self.kind == "gaussian":
            return np.exp(-0.5 * (x / p) ** 2) / (p * math.sqrt(2 * math.pi))
        if self.kind == "logistic":
            e = special.expit(x)
            return e * special.expit(-x)
        if self.kind == "laplace":
            return np.exp(-np.abs(x) / p) / (2 * p)
        if self.kind == "uniform":
            return np.where(np.abs(x) <= p, 0.5 / p, 0.0)
        return 0.5 * p * (1 + np.abs(x)) ** (-p - 1)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        p = self.param
        if self.kind == "gaussian":
            return special.ndtr(x / p)
        if self.kind == "logistic":
            return special.expit(x)
        if self.kind == "laplace":
            return np.where(x < 0, 0.5 * np.exp(np.minimum(x, 0) / p),
                            1 - 0.5 * np.exp(-np.maximum(x, 0) / p))
        if self.kind == "uniform":
            return np.clip((x + p) / (2 * p), 0.0, 1.0)
        return np.where(x < 0, 0.5 * (1 + np.abs(x)) ** (-p),
                        1 - 0.5 * (1 + np.abs(x)) ** (-p))

    def sf(self, x):
        """P(z > x), accurate in the upper tail."""
        return self.cdf(-np.asarray(x, dtype=float))

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        if np.any((q <= 0) | (q >= 1)) or np.any(np.isnan(q)):
            raise ValueError("quantile needs p in (0, 1)")
        p = self.param
        if self.kind == "gaussian":
            return p * special.ndtri(q)
        if self.kind == "logistic":
            return special.logit(q)
        if self.kind == "laplace":
            return np.where(q < 0.5, p * np.log(2 * q), -p * np.log(2 * (1 - q)))
        if self.kind == "uniform":
            return p * (2 * q - 1)
        hi = (2 * (1 - q)) ** (-1 / p) - 1
        lo = 1 - (2 * q) ** (-1 / p)
        return np.where(q >= 0.5, hi, lo)

    def mean(self) -> float:
        return 0.0

    def variance(self) -> float:
        p = self.param
        if self.kind == "gaussian":
            return p * p
        if self.kind == "logistic":
            return math.pi ** 2 / 3
        if self.kind == "laplace":
            return 2 * p * p
        if self.kind == "uniform":
            return p * p / 3
        return 2.0 / ((p - 1) * (p - 2))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance())

    def tail_class(self) -> TailClass:
        if self.kind == "gaussian":
            return TailClass("exponential", math.inf)
        if self.kind == "logistic":
            return TailClass("exponential", 1.0)
        if self.kind == "laplace":
            return TailClass("exponential", 1.0 / self.param)
        if self.kind == "uniform":
            return TailClass("compact", self.param)
        return TailClass("polynomial", self.param)

    def upper_tail_mean(self, w: float) -> float:
        """E[z; z > w] for w >= 0."""
        p = self.param
        if self.kind == "gaussian":
            return p / math.sqrt(2 * math.pi) * math.exp(-0.5 * (w / p) ** 2)
        if self.kind == "logistic":
            return w * special.expit(-w) + math.log1p(math.exp(-w))
        if self.kind == "laplace":
            return 0.5 * (w + p) * math.exp(-w / p)
        if self.kind == "uniform":
            return 0.0 if w >= p else (p * p - w * w) / (4 * p)
        return w * 0.5 * (1 + w) ** (-p) + 0.5 * (1 + w) ** (1 - p) / (p - 1)

    def support_radius(self, threshold: float = 1e-16, cap: float = 1000.0) -> float:
        """Smallest w with density(w) < threshold, capped; all densities decrease on x > 0."""
        if float(self.density(cap)) >= threshold:
            return cap
        lo, hi = 0.0, cap
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.density(mid)) >= threshold:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-9:
                break
        return hi

    def cell_weights(self, dx: float, threshold: float = 1e-16, cap: float = 1000.0):
        """Cell masses w_m = P(|z - m dx| < dx/2) for |m| <= M.

        Returns (M, w, tail) with tail = P(z > (M + 1/2) dx).
        """
        w_max = self.support_radius(threshold, cap)
        m = int(math.ceil(w_max / dx))
        edges = dx * (np.arange(-m, m + 2) - 0.5)
        c = self.cdf(edges)
        # upper half via the survival function to keep tiny masses accurate
        s = self.sf(edges)
        w = np.where(edges[:-1] >= 0, s[:-1] - s[1:], c[1:] - c[:-1])
        tail = float(self.sf((m + 0.5) * dx))
        return m, w, tail

    def sample(self, rng: np.random.Generator, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = np.empty(n)
        _fill(rng, self.code, float(self.param), out)
        if size is None:
            return float(out[0])
        return out.reshape(size)


def parse_law(text: str) -> DisorderLaw:
    """Parse 'gaussian:sigma=1', 'logistic', 'laplace:b=1', 'uniform:hw=1', 'powertail:beta=7'."""
    text = text.strip()
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    if name not in _NAMES:
        raise ValueError(f"unknown law {name!r}; expected one of {sorted(_NAMES)}")
    key = _PARAM[_NAMES[name]]
    if key is None:
        if rest.strip():
            raise ValueError(f"{name} takes no parameters")
        return DisorderLaw(name)
    if not rest.strip():
        return DisorderLaw(name, 7.0 if name == "powertail" else 1.0)
    k, eq, v = rest.partition("=")
    if not eq or k.strip() != key:
        raise ValueError(f"{name} expects '{key}=<value>', got {rest!r}")
    try:
        val = float(v)
    except ValueError:
        raise ValueError(f"bad numeric value {v!r} in law spec") from None
    return DisorderLaw(name, val)
