"""Ladder epochs of the driving walk S_n = z_1 + ... + z_n and the two
representations of the excursion occupation F(theta, (x, y]).

Descending epochs are strict (S_n < S_rho), ascending epochs weak
(S_n >= H). F is estimated directly from Y excursions up to the first
strict descent, and through the increasing J chain
J_{k+1} = J_k + dH_k + log(1 + eta~_k e^(-J_k)) driven by ascending
ladder pairs.

For Gaussian steps, stretches of the walk that are far from anything
being counted are advanced by exact Gaussian block sums: a block of m
steps is taken only while sigma sqrt(m) is at most 1/7 of the distance to
the nearest relevant level, so crossing it inside the block has
probability below 1e-11.
"""

from dataclasses import dataclass
import math

import numba as nb
import numpy as np

from . import rng as streams
from .disorder import GAUSSIAN, DisorderLaw, draw
from .errors import ConvergenceError
from .gridfn import EstimateCI
from .parallel import ordered_map

DEEP = 40.0      # skipped stretches stay this far from any counted level
BLOCK = 7.0      # block size sigma sqrt(m) <= distance / BLOCK
CHUNK = 1000     # paths per random stream
PATH_CAP = 10**9  # longer paths are discarded and counted


@dataclass
class LadderRecord:
    desc_rho: np.ndarray
    desc_delta: np.ndarray
    desc_eta: np.ndarray
    asc_alpha: np.ndarray
    asc_height: np.ndarray
    asc_eta: np.ndarray
    walk_len: int
    truncated: bool


@nb.njit(cache=True)
def _extract(z):
    n = z.size
    rho = np.empty(n, np.int64)
    dlt = np.empty(n)
    eta = np.empty(n)
    alpha = np.empty(n, np.int64)
    hgt = np.empty(n)
    eta_t = np.empty(n)
    nd = 0
    na = 0
    s = 0.0
    # descending: log sum of e^{-S_m} over the open excursion, starting at S_0
    s_low = 0.0
    l_d = 0.0
    # ascending: log sum of e^{S_m} since the last epoch
    h = 0.0
    l_a = -np.inf
    for i in range(n):
        s += z[i]
        k = i + 1
        if s < s_low:
            rho[nd] = k
            dlt[nd] = s_low - s
            eta[nd] = math.exp(s + l_d)
            nd += 1
            s_low = s
            l_d = -s
        else:
            t = -s
            l_d = max(l_d, t) + math.log1p(math.exp(-abs(l_d - t)))
        if l_a == -np.inf:
            l_a = s
        else:
            l_a = max(l_a, s) + math.log1p(math.exp(-abs(l_a - s)))
        if s >= h:
            alpha[na] = k
            hgt[na] = s
            eta_t[na] = math.exp(l_a - s)
            na += 1
            h = s
            l_a = -np.inf
    last_d = rho[nd - 1] if nd > 0 else 0
    last_a = alpha[na - 1] if na > 0 else 0
    trunc = last_d < n or last_a < n
    return rho[:nd], dlt[:nd], eta[:nd], alpha[:na], hgt[:na], eta_t[:na], trunc


def extract_ladders(z_samples) -> LadderRecord:
    """Both ladder families of the walk driven by z_samples in one pass.
    Unfinished excursions at the end are dropped and flagged."""
    z = np.ascontiguousarray(z_samples, dtype=float)
    if z.size == 0:
        raise ValueError("need a nonempty sample")
    r, d, e, a, hh, et, tr = _extract(z)
    return LadderRecord(r, d, e, a, hh, et, int(z.size), bool(tr))


def theta_step(theta: float, delta: float, eta: float) -> float:
    """log(e^(theta - delta) + eta)."""
    if not (delta > 0 and eta > 0):
        raise ValueError("theta_step needs delta > 0 and eta > 0")
    a = theta - delta
    b = math.log(eta)
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


def theta_chain(theta0: float, record: LadderRecord) -> np.ndarray:
    """Theta_0 = theta0 and Theta_j from the descending ladder record."""
    out = [float(theta0)]
    for d, e in zip(record.desc_delta, record.desc_eta):
        out.append(theta_step(out[-1], d, e))
    return np.array(out)


# samplers

@nb.njit(cache=True, inline="always")
def _skip_len(dist, sigma):
    r = dist / (BLOCK * sigma)
    return int(r * r)


@nb.njit(cache=True, nogil=True)
def _ascending_pair(rng, code, param, cap):
    """One weak ascending ladder epoch from level 0.
    Returns (height, log eta~, steps, truncated)."""
    s = 0.0
    n = 0
    lsum = -np.inf
    gauss = code == GAUSSIAN
    while True:
        if gauss and -s > DEEP + BLOCK * param:
            m = _skip_len(-s - DEEP, param)
            if m > 1:
                s += math.sqrt(m) * param * rng.standard_normal()
                n += m
                if n >= cap:
                    return s, lsum, n, True
                continue
        s += draw(rng, code, param)
        n += 1
        if lsum == -np.inf:
            lsum = s
        else:
            lsum = max(lsum, s) + math.log1p(math.exp(-abs(lsum - s)))
        if s >= 0.0:
            return s, lsum - s, n, False
        if n >= cap:
            return s, lsum, n, True


@nb.njit(cache=True, nogil=True)
def _ascending_heights(rng, code, param, cap, out):
    ntr = 0
    i = 0
    while i < out.size:
        hgt, _, _, tr = _ascending_pair(rng, code, param, cap)
        if tr:
            ntr += 1
            continue
        out[i] = hgt
        i += 1
    return ntr


@nb.njit(cache=True, nogil=True)
def _first_descent(rng, code, param, cap, n_paths, out):
    gauss = code == GAUSSIAN
    for p in range(n_paths):
        s = 0.0
        n = 0
        while True:
            if gauss and s > DEEP + BLOCK * param:
                m = _skip_len(s - DEEP, param)
                if m > 1 and n + m < cap:
                    s += math.sqrt(m) * param * rng.standard_normal()
                    n += m
                    continue
            s += draw(rng, code, param)
            n += 1
            if s < 0.0 or n >= cap:
                break
        out[p] = n


@nb.njit(cache=True, nogil=True)
def _in(v, lo, hi):
    return v > lo and v <= hi


@nb.njit(cache=True, nogil=True)
def _f_direct_kernel(rng, code, param, thetas, xs, ys, n_paths, cap, counts, trunc):
    nt = thetas.size
    ni = xs.size
    y_top = ys.max()
    # above this walk level every Y sits at least DEEP over all windows
    thr = y_top - thetas.min() + DEEP
    gauss = code == GAUSSIAN
    yv = np.empty(nt)
    for p in range(n_paths):
        for t in range(nt):
            yv[t] = thetas[t]
            for i in range(ni):
                if _in(yv[t], xs[i], ys[i]):
                    counts[p, t, i] += 1
        s = 0.0
        n = 0
        while True:
            if gauss and s - thr > BLOCK * param:
                m = _skip_len(s - thr, param)
                if m > 1:
                    dz = math.sqrt(m) * param * rng.standard_normal()
                    s += dz
                    n += m
                    # h(y) = y to machine precision this far up
                    for t in range(nt):
                        yv[t] += dz
                    if n >= cap:
                        trunc[p] = True
                        break
                    continue
            z = draw(rng, code, param)
            s += z
            n += 1
            if s < 0.0:
                break
            for t in range(nt):
                y = yv[t]
                if y > 0:
                    y = z + y + math.log1p(math.exp(-y))
                else:
                    y = z + math.log1p(math.exp(y))
                yv[t] = y
                for i in range(ni):
                    if _in(y, xs[i], ys[i]):
                        counts[p, t, i] += 1
            if n >= cap:
                trunc[p] = True
                break


@nb.njit(cache=True, nogil=True)
def _f_j_kernel(rng, code, param, thetas, xs, ys, n_paths, cap, k_max, counts, trunc, unresolved):
    nt = thetas.size
    ni = xs.size
    y_top = ys.max()
    jv = np.empty(nt)
    for p in range(n_paths):
        for t in range(nt):
            jv[t] = thetas[t]
            for i in range(ni):
                if _in(jv[t], xs[i], ys[i]):
                    counts[p, t, i] += 1
        k = 0
        while jv.min() <= y_top:
            if k >= k_max:
                unresolved[p] = True
                break
            hgt, leta, _, tr = _ascending_pair(rng, code, param, cap)
            if tr:
                trunc[p] = True
                break
            k += 1
            for t in range(nt):
                a = leta - jv[t]
                if a > 0:
                    lp = a + math.log1p(math.exp(-a))
                else:
                    lp = math.log1p(math.exp(a))
                jv[t] = jv[t] + hgt + lp
                for i in range(ni):
                    if _in(jv[t], xs[i], ys[i]):
                        counts[p, t, i] += 1


@dataclass
class FTable:
    """Estimates of F(theta, (x, y]) on a theta x interval grid."""
    thetas: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    estimates: list            # estimates[t][i] -> EstimateCI
    n_paths: int
    n_discarded: int
    unresolved: int = 0
    k_max: int = 0

    @property
    def discarded_fraction(self) -> float:
        return self.n_discarded / self.n_paths

    def rows(self):
        for t, th in enumerate(self.thetas):
            for i in range(self.xs.size):
                e = self.estimates[t][i]
                yield float(th), float(self.xs[i]), float(self.ys[i]), e.value, e.std_error


def _chunks(n_paths):
    return [(k, min(CHUNK, n_paths - k * CHUNK)) for k in range((n_paths + CHUNK - 1) // CHUNK)]


def _table(counts, trunc, thetas, xs, ys, n_paths, level, unresolved=0, k_max=0):
    keep = counts[~trunc]
    est = [[EstimateCI.from_blocks(keep[:, t, i], level) for i in range(xs.size)]
           for t in range(thetas.size)]
    return FTable(thetas, xs, ys, est, n_paths, int(trunc.sum()), unresolved, k_max)


def _prep(thetas, xs, ys):
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    y = np.atleast_1d(np.asarray(ys, dtype=float))
    if x.shape != y.shape or np.any(x >= y):
        raise ValueError("need x < y for every interval")
    return th, x, y


def f_table_direct(thetas, law: DisorderLaw, xs, ys, n_paths: int, seed: int,
                   cap: int = PATH_CAP, threads: int = 1, level: float = 0.95) -> FTable:
    """Direct excursion estimate: visits of Y to (x, y] before the first
    strict descent of S. Paths longer than `cap` steps are discarded."""
    th, x, y = _prep(thetas, xs, ys)

    def job(ch):
        k, m = ch
        r = streams.make_rng(seed, streams.LADDER_DIRECT, k)
        c = np.zeros((m, th.size, x.size))
        tr = np.zeros(m, dtype=np.bool_)
        _f_direct_kernel(r, law.code, law.param, th, x, y, m, cap, c, tr)
        return c, tr

    parts = ordered_map(job, _chunks(n_paths), threads)
    counts = np.concatenate([p[0] for p in parts])
    trunc = np.concatenate([p[1] for p in parts])
    return _table(counts, trunc, th, x, y, n_paths, level)


def f_table_via_j(thetas, law: DisorderLaw, xs, ys, n_paths: int, seed: int, k_max: int = 64,
                  cap: int = PATH_CAP, threads: int = 1, level: float = 0.95,
                  unresolved_tol: float = 1e-3, max_doublings: int = 8) -> FTable:
    """J-chain estimate: number of k with J_k(theta) in (x, y]. k_max doubles
    (same random streams) until fewer than unresolved_tol of the paths are
    still at or below max(y) after k_max ladder epochs."""
    th, x, y = _prep(thetas, xs, ys)
    km = int(k_max)
    for _ in range(max_doublings + 1):
        def job(ch, km=km):
            k, m = ch
            r = streams.make_rng(seed, streams.LADDER_J, k)
            c = np.zeros((m, th.size, x.size))
            tr = np.zeros(m, dtype=np.bool_)
            un = np.zeros(m, dtype=np.bool_)
            _f_j_kernel(r, law.code, law.param, th, x, y, m, cap, km, c, tr, un)
            return c, tr, un

        parts = ordered_map(job, _chunks(n_paths), threads)
        unresolved = int(sum(p[2].sum() for p in parts))
        if unresolved < unresolved_tol * n_paths:
            counts = np.concatenate([p[0] for p in parts])
            trunc = np.concatenate([p[1] for p in parts])
            return _table(counts, trunc, th, x, y, n_paths, level, unresolved, km)
        km *= 2
    raise ConvergenceError(f"J chain unresolved on {unresolved} paths with k_max={km // 2}",
                           residual=unresolved / n_paths, iterations=km // 2)


def F_direct(theta, law, x, y, n_paths, seed, cap=PATH_CAP, threads=1) -> EstimateCI:
    return f_table_direct([theta], law, [x], [y], n_paths, seed, cap, threads).estimates[0][0]


def F_via_J(theta, law, x, y, n_paths, k_max, seed, cap=PATH_CAP, threads=1) -> EstimateCI:
    return f_table_via_j([theta], law, [x], [y], n_paths, seed, k_max, cap, threads).estimates[0][0]


def first_descent_times(law: DisorderLaw, n_paths: int, seed: int, cap: int = 10**7) -> np.ndarray:
    """rho_1 = min{n : S_n < 0} per path, capped at `cap`."""
    out = np.zeros(n_paths, dtype=np.int64)
    _first_descent(streams.make_rng(seed, streams.LADDER_DIRECT, 10**6), law.code, law.param,
                   cap, n_paths, out)
    return out


def ladder_height_sampler(law: DisorderLaw, cap: int = 10**9):
    """Sampler (rng, size) -> weak ascending ladder heights of the law's walk.
    Epochs longer than `cap` steps are redrawn."""
    def sample(rng, size):
        out = np.empty(int(size))
        _ascending_heights(rng, law.code, law.param, cap, out)
        return out
    return sample


def exponential_sampler(rate: float = 1.0):
    def sample(rng, size):
        return rng.exponential(1.0 / rate, int(size))
    return sample


@dataclass
class RenewalFit:
    x_grid: np.ndarray
    R_hat: np.ndarray
    R_se: np.ndarray
    c_R: float
    c_R_prime: float
    n_paths: int
    residual_se: np.ndarray

    def residual(self) -> np.ndarray:
        """|R(x) - (c_R x + c'_R)| on the grid."""
        return np.abs(self.R_hat - (self.c_R * self.x_grid + self.c_R_prime))


def _renewal_batch(sampler, rng, x, n):
    """Per-path counts #{k >= 0: H_k <= x} and all increments drawn."""
    top = x.max()
    pos = np.zeros(n)
    counts = np.ones((n, x.size))     # H_0 = 0 <= x for x >= 0
    active = np.arange(n)
    drawn = []
    while active.size:
        inc = np.asarray(sampler(rng, active.size), dtype=float)
        if np.any(inc < 0):
            raise ValueError("ladder-height sampler returned a negative value")
        drawn.append(inc)
        pos[active] += inc
        counts[active] += pos[active][:, None] <= x[None, :]
        active = active[pos[active] <= top]
    return counts, np.concatenate(drawn)


def renewal_estimate(h1_sampler, x_grid, n_paths: int, seed: int, n_batches: int = 20) -> RenewalFit:
    """Renewal function R(x) = sum_k P(H_k <= x) by simulation, with
    c_R = 1/E[H] and c'_R = E[H^2] / (2 E[H]^2) from the drawn heights."""
    x = np.asarray(x_grid, dtype=float)
    if np.any(x < 0):
        raise ValueError("x_grid must be nonnegative")
    per = [n_paths // n_batches + (1 if b < n_paths % n_batches else 0) for b in range(n_batches)]
    res_b, R_b, c_b = [], [], []
    all_counts, all_h = [], []
    for b, m in enumerate(per):
        rng = streams.make_rng(seed, streams.RENEWAL, b)
        counts, hs = _renewal_batch(h1_sampler, rng, x, m)
        all_counts.append(counts)
        all_h.append(hs)
        m1, m2 = hs.mean(), (hs * hs).mean()
        cb, cpb = 1 / m1, m2 / (2 * m1 * m1)
        Rb = counts.mean(axis=0)
        R_b.append(Rb)
        res_b.append(Rb - (cb * x + cpb))
        c_b.append((cb, cpb))
    counts = np.concatenate(all_counts)
    hs = np.concatenate(all_h)
    m1, m2 = hs.mean(), (hs * hs).mean()
    R = counts.mean(axis=0)
    R_se = counts.std(axis=0, ddof=1) / math.sqrt(counts.shape[0])
    res_se = np.std(np.array(res_b), axis=0, ddof=1) / math.sqrt(n_batches)
    return RenewalFit(x, R, R_se, float(1 / m1), float(m2 / (2 * m1 * m1)), int(n_paths), res_se)
