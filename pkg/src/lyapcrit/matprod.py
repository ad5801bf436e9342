"""Positive 2x2 matrices in log coordinates.

The transfer matrix has entries (1, e^-gamma, e^(-gamma+z), e^z). Products are kept
as entry-wise logs and renormalized after every multiplication, so nothing
overflows at any length. A large negative sentinel stands in for log 0.
"""

from dataclasses import dataclass
from fractions import Fraction
import math

import numba as nb
import numpy as np

from . import rng as streams
from .disorder import DisorderLaw, draw
from .errors import InvariantError
from .gridfn import EstimateCI
from .parallel import ordered_map

NEG = -1e308


@nb.njit(cache=True, inline="always")
def _lse(a, b):
    if a < b:
        a, b = b, a
    if a <= NEG:
        return NEG
    if b <= NEG:
        return a
    return a + math.log1p(math.exp(b - a))


@nb.njit(cache=True, inline="always")
def _add(a, b):
    if a <= NEG or b <= NEG:
        return NEG
    return a + b


@nb.njit(cache=True, inline="always")
def _slse(a, sa, b, sb):
    """Signed log-sum-exp: (log|x|, sign) of sa e^a + sb e^b."""
    if a < b:
        a, sa, b, sb = b, sb, a, sa
    if a <= NEG:
        return NEG, 1.0
    if b <= NEG:
        return a, sa
    if sa == sb:
        return a + math.log1p(math.exp(b - a)), sa
    if b == a:
        return NEG, 1.0
    return a + math.log(-math.expm1(b - a)), sa


@dataclass(frozen=True)
class LogMat2:
    l11: float
    l12: float
    l21: float
    l22: float

    @classmethod
    def identity(cls):
        return cls(0.0, NEG, NEG, 0.0)

    def as_array(self):
        return np.array([[self.l11, self.l12], [self.l21, self.l22]])

    def to_linear(self):
        return np.exp(np.where(self.as_array() <= NEG, -np.inf, self.as_array()))

    def shifted(self, s: float):
        return LogMat2(*(_add(v, s) for v in (self.l11, self.l12, self.l21, self.l22)))

    def log_gap(self) -> float:
        """g = l11 + l22 - l12 - l21, the log of a d / (b c)."""
        if self.l12 <= NEG or self.l21 <= NEG:
            return math.inf
        return self.l11 + self.l22 - self.l12 - self.l21


def transfer_matrix(gamma: float, z: float) -> LogMat2:
    """Log entries (0, -gamma, -gamma + z, z); gamma = inf gives the diagonal limit."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if math.isinf(gamma):
        return LogMat2(0.0, NEG, NEG, float(z))
    return LogMat2(0.0, -gamma, -gamma + z, float(z))


def mul(a: LogMat2, b: LogMat2) -> LogMat2:
    return LogMat2(
        _lse(_add(a.l11, b.l11), _add(a.l12, b.l21)),
        _lse(_add(a.l11, b.l12), _add(a.l12, b.l22)),
        _lse(_add(a.l21, b.l11), _add(a.l22, b.l21)),
        _lse(_add(a.l21, b.l12), _add(a.l22, b.l22)),
    )


def tau(a: LogMat2) -> float:
    """det(A) / (A11 A22) = 1 - exp(-g), evaluated without cancellation."""
    g = a.log_gap()
    if not g > 0:
        raise InvariantError(f"matrix outside M+ (log gap {g})")
    return -math.expm1(-g)


def n_gamma_sigma(gamma: float, sigma: float) -> int:
    """ceil(37 (gamma/sigma)^2), exact in rational arithmetic."""
    if not (gamma > 0 and sigma > 0):
        raise ValueError("gamma and sigma must be positive")
    q = 37 * Fraction(gamma) ** 2 / Fraction(sigma) ** 2
    return -((-q.numerator) // q.denominator)


@nb.njit(cache=True, nogil=True)
def _product_kernel(rng, code, param, lg, eps_sign, n):
    """log max-entry growth of n transfer matrices, signed entries allowed.

    lg is log|epsilon| (NEG for the diagonal limit); eps_sign is the sign of
    epsilon. Returns (accumulated shift + final max log entry).
    """
    # running product P, entries as (log|.|, sign)
    p11, p12, p21, p22 = 0.0, NEG, NEG, 0.0
    s11, s12, s21, s22 = 1.0, 1.0, 1.0, 1.0
    acc = 0.0
    for _ in range(n):
        z = draw(rng, code, param)
        # M = [[1, eps], [eps e^z, e^z]]
        m12 = lg
        m21 = _add(lg, z)
        m22 = z
        q11, t11 = _slse(p11, s11, _add(p12, m21), s12 * eps_sign)
        q12, t12 = _slse(_add(p11, m12), s11 * eps_sign, _add(p12, m22), s12)
        q21, t21 = _slse(p21, s21, _add(p22, m21), s22 * eps_sign)
        q22, t22 = _slse(_add(p21, m12), s21 * eps_sign, _add(p22, m22), s22)
        mx = max(max(q11, q12), max(q21, q22))
        acc += mx
        p11 = q11 - mx if q11 > NEG else NEG
        p12 = q12 - mx if q12 > NEG else NEG
        p21 = q21 - mx if q21 > NEG else NEG
        p22 = q22 - mx if q22 > NEG else NEG
        s11, s12, s21, s22 = t11, t12, t21, t22
    return acc + max(max(p11, p12), max(p21, p22))


def lyapunov_direct(gamma, law: DisorderLaw, n_steps: int, n_blocks: int, seed: int,
                    eps_sign: int = 1, threads: int = 1, level: float = 0.95) -> EstimateCI:
    """Block estimates (1/n) log ||M_n ... M_1||_max with a fresh product per block.

    gamma = inf is the diagonal (epsilon = 0) limit. eps_sign = -1 uses
    epsilon = -e^-gamma, which gives signed entries.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if n_blocks < 2:
        raise ValueError("need at least two blocks")
    lg = NEG if math.isinf(gamma) else -float(gamma)

    def block(k):
        r = streams.make_rng(seed, streams.DIRECT, k)
        return _product_kernel(r, law.code, law.param, lg, float(np.sign(eps_sign)), int(n_steps)) / n_steps

    vals = ordered_map(block, range(n_blocks), threads)
    return EstimateCI.from_blocks(vals, level)


@nb.njit(cache=True, nogil=True)
def _tau_kernel(rng, code, param, gamma, n, reps):
    out = np.empty(reps)
    ld_step = math.log1p(-math.exp(-2.0 * gamma))
    for r in range(reps):
        p11, p12, p21, p22 = 0.0, NEG, NEG, 0.0
        # log det of the renormalized product, tracked separately so that
        # tiny tau values survive (1 - exp(-g) cancels once g ~ 1e-16)
        logdet = 0.0
        for _ in range(n):
            z = draw(rng, code, param)
            m12 = -gamma
            m21 = -gamma + z
            q11 = _lse(p11, _add(p12, m21))
            q12 = _lse(_add(p11, m12), _add(p12, z))
            q21 = _lse(p21, _add(p22, m21))
            q22 = _lse(_add(p21, m12), _add(p22, z))
            mx = max(max(q11, q12), max(q21, q22))
            p11 = q11 - mx
            p12 = q12 - mx
            p21 = q21 - mx
            p22 = q22 - mx
            logdet += z + ld_step - 2.0 * mx
        if n == 0:
            out[r] = 1.0
            continue
        lt = logdet - (p11 + p22)
        g = p11 + p22 - p12 - p21
        # the gap form cancels once tau is tiny; use the tracked determinant there
        if g > 1.0:
            out[r] = -math.expm1(-g)
        else:
            out[r] = math.exp(min(lt, 0.0))
    return out


def product_taus(gamma, law: DisorderLaw, n: int, reps: int, seed: int,
                 threads: int = 1, chunk: int = 50) -> np.ndarray:
    """tau(M_1 ... M_n) for `reps` independent products."""
    if n == 0:
        return np.ones(reps)
    starts = list(range(0, reps, chunk))

    def job(i):
        r = streams.make_rng(seed, streams.TAU, i)
        m = min(chunk, reps - starts[i])
        return _tau_kernel(r, law.code, law.param, float(gamma), int(n), m)

    return np.concatenate(ordered_map(job, range(len(starts)), threads))


def contraction_mean_tau(gamma, law: DisorderLaw, n: int, reps: int, seed: int,
                         threads: int = 1, level: float = 0.95) -> EstimateCI:
    """Mean of tau over independent products of n transfer matrices."""
    if n == 0:
        return EstimateCI(1.0, 0.0, max(reps, 2), level)
    return EstimateCI.from_blocks(product_taus(gamma, law, n, reps, seed, threads), level)
