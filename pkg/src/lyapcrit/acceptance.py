"""Acceptance checks 1-12 as plain functions returning pass/fail records.

Used by `lyapcrit validate` and by tests/test_acceptance.py. Every check is
deterministic given (seed, quick); `threads` only changes wall time.
Quick mode shrinks sample sizes and doubles the tolerances.
"""

from dataclasses import dataclass, field
import math
import os
import tempfile
import time

import numpy as np

from .dh import (build_gamma_probability, dh_constants, fit_kappas_from_sweep,
                 kappa1_from_edge, kappa1_from_measure, lyapunov_dh)
from .disorder import DisorderLaw
from .gridfn import EstimateCI
from .ladder import (exponential_sampler, f_table_direct, f_table_via_j,
                     ladder_height_sampler, renewal_estimate)
from .matprod import contraction_mean_tau, lyapunov_direct, n_gamma_sigma
from .operator import OperatorConfig, geometric_sum_check, one_step_distance, point_mass_risk
from .projective import XChainConfig, furstenberg_blocks, furstenberg_to_precision
from .ychain import DEFAULT_GRID, edge_fits, invariant_fixed_point, invariant_occupation_ratio

DEFAULT_SEED = 2024
GAUSS = DisorderLaw.gaussian(1.0)
SWEEP_GAMMAS = (8.0, 12.0, 16.0, 24.0)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0          # wall time; kept out of result files

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{tag}] {self.title} ({self.seconds:.1f} s)"


class Context:
    """Shared settings plus a cache of expensive intermediate results."""

    def __init__(self, seed: int = DEFAULT_SEED, quick: bool = False, threads: int = 1):
        self.seed = int(seed)
        self.quick = bool(quick)
        self.threads = int(threads)
        self._cache = {}

    def sub_seed(self, number: int, k: int = 0) -> int:
        return self.seed + 7919 * number + k

    @property
    def scale(self) -> float:
        """Tolerance multiplier: 2 in quick mode."""
        return 2.0 if self.quick else 1.0

    def fits(self, law: DisorderLaw, tol: float = 1e-12):
        key = ("fits", law.spec, tol)
        if key not in self._cache:
            self._cache[key] = edge_fits(law, DEFAULT_GRID, tol, 20000)
        return self._cache[key]

    def gaussian_sweep(self):
        """Furstenberg estimates at SWEEP_GAMMAS, shared by checks 4 and the tests."""
        if "sweep" not in self._cache:
            rel = 0.01 * self.scale
            out = {}
            for k, g in enumerate(SWEEP_GAMMAS):
                cfg = XChainConfig(g, GAUSS, 2_000_000, seed=self.sub_seed(4, k))
                out[g] = furstenberg_to_precision(cfg, rel, 16, 4096, self.threads)[0]
            self._cache["sweep"] = out
        return self._cache["sweep"]


def _agree(a: EstimateCI, b, scale: float, slack: float = 0.0) -> bool:
    """|a - b| within scale times the combined 95% CI, plus slack."""
    se_b = b.std_error if isinstance(b, EstimateCI) else 0.0
    vb = b.value if isinstance(b, EstimateCI) else float(b)
    return abs(a.value - vb) <= scale * a.z * math.hypot(a.std_error, se_b) + slack


def _timed(fn):
    def run(ctx):
        t0 = time.perf_counter()
        res = fn(ctx)
        res.seconds = time.perf_counter() - t0
        limit = res.details.pop("_runtime_limit", None)
        if limit is not None:
            ok = res.seconds <= limit
            res.details["runtime_within_limit"] = ok
            res.passed = res.passed and ok
        return res
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def check_exact_invariant(ctx: Context) -> CriterionResult:
    """Logistic edge measure against log(1 + e^x)."""
    law = DisorderLaw.logistic()
    fit = invariant_fixed_point(law, DEFAULT_GRID, tol=1e-8)
    x = np.linspace(-10, 30, 4001)
    err = float(np.max(np.abs(fit.F.eval(x) - np.logaddexp(0, x))))
    tol_sup, tol_d = 5e-3 * ctx.scale, 1e-3 * ctx.scale
    ok = err <= tol_sup and abs(fit.d) <= tol_d
    return CriterionResult(1, "logistic fixed point equals log(1+e^x)", ok,
                           {"sup_error": err, "d": fit.d, "iterations": fit.iterations,
                            "_runtime_limit": 60.0})


@_timed
def check_occupation_oracle(ctx: Context) -> CriterionResult:
    """Occupation ratio of long Y runs against the fixed point."""
    n = 2_000_000 if ctx.quick else 10_000_000
    k = 3.0 * ctx.scale
    details, ok = {}, True
    for j, law in enumerate((DisorderLaw.logistic(), GAUSS)):
        F = ctx.fits(law)[0].F
        occ = invariant_occupation_ratio(law, DEFAULT_GRID, n, ctx.sub_seed(2, j), 16,
                                         (10.0, 30.0), ctx.threads)
        for x in (0.0, 2.0, 5.0, 10.0):
            est = occ.interval_mass(x, x + 1)
            ref = float(F.eval(x + 1) - F.eval(x))
            good = abs(est.value - ref) <= k * est.half_width
            ok &= good
            details[f"{law.spec}_x{x:g}"] = {"occupation": est.value, "half_width": est.half_width,
                                            "fixed_point": ref, "ok": good}
    details["_runtime_limit"] = 300.0
    return CriterionResult(2, "occupation ratio matches fixed point", ok, details)


@_timed
def check_kappa1_identity(ctx: Context) -> CriterionResult:
    """kappa1 from the edge formula equals sigma^2/4 for five laws."""
    laws = [GAUSS, DisorderLaw.logistic(), DisorderLaw.laplace(1.0),
            DisorderLaw.uniform(math.sqrt(3.0)), DisorderLaw.powertail(8.0)]
    details, ok = {}, True
    for law in laws:
        fit = invariant_fixed_point(law, DEFAULT_GRID, tol=1e-10, max_iter=20000)
        # left-edge form 1/2 int log(1 + e^-y) dF(y); the right-edge form is reported
        k1 = kappa1_from_measure(fit)
        target = law.variance() / 4
        rel = abs(k1 - target) / target
        good = rel <= 0.02 * ctx.scale
        ok &= good
        details[law.spec] = {"kappa1": k1, "kappa1_edge_integral": kappa1_from_edge(fit),
                             "target": target, "rel_error": rel, "ok": good}
    details["_runtime_limit"] = 600.0
    return CriterionResult(3, "kappa1 = sigma^2/4 from the edge measure", ok, details)


@_timed
def check_asymptotic(ctx: Context) -> CriterionResult:
    """Furstenberg sweep against kappa1 / (gamma + kappa2)."""
    fl, fr = ctx.fits(GAUSS)
    const = dh_constants(12.0, fl, fr)
    k1, k2 = const.kappa1, const.kappa2
    sweep = ctx.gaussian_sweep()
    details = {"kappa1": k1, "kappa2": k2}
    ok = True
    for g, est in sweep.items():
        ci_ok = est.rel_half_width <= 0.01 * ctx.scale
        row = {"estimate": est.value, "stderr": est.std_error, "rel_half_width": est.rel_half_width,
               "n_blocks": est.n_blocks, "ci_ok": ci_ok}
        good = ci_ok
        if g >= 12:
            dev = abs(est.value * (g + k2) - k1) / k1
            row["rel_deviation"] = dev
            good &= dev <= 0.05 * ctx.scale
        row["ok"] = good
        ok &= good
        details[f"gamma_{g:g}"] = row
    kf = fit_kappas_from_sweep(list(sweep), list(sweep.values()), max_rel_ci=None)
    details["sweep_fit"] = kf.as_dict()
    details["_runtime_limit"] = 1800.0
    return CriterionResult(4, "Furstenberg sweep follows kappa1/(gamma+kappa2)", ok, details)


@_timed
def check_cross_method(ctx: Context) -> CriterionResult:
    """Direct, Furstenberg and edge-measure values at gamma = 10."""
    g = 10.0
    n_blocks = 16 if ctx.quick else 32
    direct = lyapunov_direct(g, GAUSS, 1_000_000, n_blocks, ctx.sub_seed(5), threads=ctx.threads)
    cfg = XChainConfig(g, GAUSS, 2_000_000, seed=ctx.sub_seed(5, 1))
    furst = furstenberg_to_precision(cfg, 0.01 * ctx.scale, 16, 4096, ctx.threads)[0]
    dh = lyapunov_dh(g, ctx.fits(GAUSS))
    tol = 0.02 * ctx.scale * dh
    d_f = _agree(direct, furst, ctx.scale)
    d_dh = _agree(direct, dh, ctx.scale, tol)
    f_dh = _agree(furst, dh, ctx.scale, tol)
    return CriterionResult(5, "direct, Furstenberg and DH agree at gamma=10", d_f and d_dh and f_dh,
                           {"direct": direct.as_dict(), "furstenberg": furst.as_dict(), "dh": dh,
                            "direct_vs_furstenberg": d_f, "direct_vs_dh": d_dh,
                            "furstenberg_vs_dh": f_dh})


@_timed
def check_symmetries(ctx: Context) -> CriterionResult:
    """epsilon = 0 limit, sign of epsilon, and L versus L*."""
    details = {}
    # epsilon = 0: each block is max(0, S_n)/n, whose exact mean is sigma/sqrt(2 pi n)
    zero_ok = True
    for j, n in enumerate((10_000, 1_000_000)):
        blocks = 50 if ctx.quick else 200
        if n > 10_000:
            blocks //= 5
        est = lyapunov_direct(math.inf, GAUSS, n, blocks, ctx.sub_seed(6, j), threads=ctx.threads)
        mean_n = GAUSS.sigma / math.sqrt(2 * math.pi * n)
        good = abs(est.value - mean_n) <= ctx.scale * est.half_width
        zero_ok &= good
        details[f"eps0_n{n}"] = {"estimate": est.value, "half_width": est.half_width,
                                 "finite_n_mean": mean_n, "ok": good}
    g = 10.0
    steps = 500_000 if ctx.quick else 1_000_000
    plus = lyapunov_direct(g, GAUSS, steps, 16, ctx.sub_seed(6, 10), eps_sign=1, threads=ctx.threads)
    minus = lyapunov_direct(g, GAUSS, steps, 16, ctx.sub_seed(6, 11), eps_sign=-1, threads=ctx.threads)
    pm_ok = _agree(plus, minus, ctx.scale)
    # L and L* come from the same blocks and are strongly correlated (their
    # difference telescopes to the mean step), so the combined CI is the
    # batch-means CI of the paired per-block differences
    cfg = XChainConfig(g, GAUSS, 1_000_000, seed=ctx.sub_seed(6, 12))
    v = furstenberg_blocks(cfg, range(16), ctx.threads)
    L, Ls = EstimateCI.from_blocks(v[:, 0]), EstimateCI.from_blocks(v[:, 1])
    diff = EstimateCI.from_blocks(v[:, 0] - v[:, 1])
    ls_ok = abs(diff.value) <= ctx.scale * diff.half_width
    details.update({"plus_eps": plus.as_dict(), "minus_eps": minus.as_dict(), "pm_ok": pm_ok,
                    "L": L.as_dict(), "L_star": Ls.as_dict(), "L_minus_L_star": diff.as_dict(),
                    "L_vs_L_star": ls_ok, "eps0_ok": zero_ok})
    return CriterionResult(6, "epsilon=0, +-epsilon and L vs L* symmetries", zero_ok and pm_ok and ls_ok,
                           details)


@_timed
def check_ladder_duality(ctx: Context) -> CriterionResult:
    """Direct excursion counts against the J-chain representation."""
    n = 20_000 if ctx.quick else 100_000
    th, xs = [0.0, 1.0, 3.0], [5.0, 10.0, 20.0]
    ys = [x + 1 for x in xs]
    a = f_table_direct(th, GAUSS, xs, ys, n, ctx.sub_seed(7), threads=ctx.threads)
    b = f_table_via_j(th, GAUSS, xs, ys, n, ctx.sub_seed(7, 1), threads=ctx.threads)
    z = a.estimates[0][0].z
    details, ok = {}, True
    for t in range(len(th)):
        for i in range(len(xs)):
            ea, eb = a.estimates[t][i], b.estimates[t][i]
            good = abs(ea.value - eb.value) <= z * ctx.scale * math.hypot(ea.std_error, eb.std_error)
            ok &= good
            details[f"theta{th[t]:g}_x{xs[i]:g}"] = {"direct": ea.value, "direct_se": ea.std_error,
                                                     "via_j": eb.value, "via_j_se": eb.std_error,
                                                     "ok": good}
    frac_ok = a.discarded_fraction < 0.01 and b.discarded_fraction < 0.01
    details.update({"discarded_direct": a.discarded_fraction, "discarded_j": b.discarded_fraction,
                    "k_max": b.k_max, "_runtime_limit": 300.0})
    return CriterionResult(7, "ladder duality on the 3x3 grid", ok and frac_ok, details)


@_timed
def check_renewal(ctx: Context) -> CriterionResult:
    """Exp(1) renewal oracle and the Gaussian ladder-height residual."""
    n = 20_000 if ctx.quick else 100_000
    x = np.linspace(1, 10, 19)
    ex = renewal_estimate(exponential_sampler(1.0), x, n, ctx.sub_seed(8))
    rel = np.abs(ex.R_hat - (x + 1)) / (x + 1)
    exp_ok = bool(np.all(rel <= 0.02 * ctx.scale))
    xg = np.array([2.0, 4.0, 8.0, 16.0])
    gs = renewal_estimate(ladder_height_sampler(GAUSS), xg, n, ctx.sub_seed(8, 1))
    r, se = gs.residual(), gs.residual_se
    steps = [r[i + 1] - r[i] <= 2 * ctx.scale * math.hypot(se[i], se[i + 1]) for i in range(3)]
    g_ok = all(steps)
    return CriterionResult(8, "renewal function asymptotics", exp_ok and g_ok,
                           {"exp_max_rel_error": float(rel.max()), "exp_ok": exp_ok,
                            "gauss_c_R": gs.c_R, "gauss_c_R_prime": gs.c_R_prime,
                            "gauss_residual": r, "gauss_residual_se": se, "gauss_ok": g_ok})


@_timed
def check_contraction(ctx: Context) -> CriterionResult:
    """Mean Birkhoff coefficient after n_{gamma,sigma} steps."""
    g = 10.0
    n = n_gamma_sigma(g, 1.0)
    reps = 200 if ctx.quick else 500
    est = contraction_mean_tau(g, GAUSS, n, reps, ctx.sub_seed(9), ctx.threads)
    ok = est.value <= 0.5 + 3 * est.std_error
    return CriterionResult(9, "mean tau after n_{gamma,sigma} steps is at most 1/2", ok,
                           {"n": n, "reps": reps, "mean_tau": est.value, "stderr": est.std_error,
                            "_runtime_limit": 120.0})


@_timed
def check_geometric_sum(ctx: Context) -> CriterionResult:
    """Sum of ||T0^n G||_1 for a difference of point masses."""
    cfg = OperatorConfig(8.0, GAUSS)
    grid = cfg.grid
    G = point_mass_risk(grid, 1.0) - point_mass_risk(grid, -1.0)
    gs = geometric_sum_check(cfg, G)
    frac = gs.last_decile_fraction()
    ok = gs.total <= gs.bound and frac < 0.05 and gs.envelope_ok()
    return CriterionResult(10, "geometric sum of T0 iterates below the bound", ok,
                           {"total": gs.total, "bound": gs.bound, "norm": gs.norm,
                            "last_decile_fraction": frac, "n_terms": int(gs.terms.size)})


@_timed
def check_one_step(ctx: Context) -> CriterionResult:
    """||T G - G||_1 for the glued edge probability."""
    fl, fr = ctx.fits(GAUSS)
    dist = []
    for g in SWEEP_GAMMAS:
        G, _ = build_gamma_probability(g, fl, fr)
        dist.append(one_step_distance(OperatorConfig(g, GAUSS), G))
    ok = all(b < a for a, b in zip(dist, dist[1:]))
    return CriterionResult(11, "one-step distance decreases in gamma", ok,
                           {"gammas": list(SWEEP_GAMMAS), "distances": dist})


def _result_files(root):
    out = {}
    for sub in ("results", "gridfn"):
        d = os.path.join(root, sub)
        if os.path.isdir(d):
            for name in sorted(os.listdir(d)):
                with open(os.path.join(d, name), "rb") as fh:
                    out[f"{sub}/{name}"] = fh.read()
    return out


REPRO_COMMANDS = (
    ["lyapunov", "--method", "direct", "--gamma", "10", "--steps", "200000", "--blocks", "8"],
    ["lyapunov", "--method", "furstenberg", "--gamma", "8", "--steps", "400000", "--blocks", "8"],
    ["contraction", "--gamma", "4", "--reps", "64"],
    ["ladder-check", "--paths", "4000"],
)


@_timed
def check_reproducibility(ctx: Context) -> CriterionResult:
    """Subcommands rerun with 1 and 2 threads write identical result files."""
    from .cli import main as cli_main
    details, ok = {}, True
    with tempfile.TemporaryDirectory() as tmp:
        for j, cmd in enumerate(REPRO_COMMANDS):
            files = []
            for threads in (1, 2):
                out = os.path.join(tmp, f"{j}_{threads}")
                code = cli_main(cmd + ["--seed", str(ctx.seed), "--threads", str(threads),
                                       "--out-dir", out], quiet=True)
                files.append((code, _result_files(out)))
            same = files[0] == files[1] and files[0][0] == 0 and len(files[0][1]) > 0
            ok &= same
            details[cmd[0] + ("_" + cmd[2] if cmd[0] == "lyapunov" else "")] = same
    return CriterionResult(12, "result files independent of thread count", ok, details)


CHECKS = {
    1: check_exact_invariant,
    2: check_occupation_oracle,
    3: check_kappa1_identity,
    4: check_asymptotic,
    5: check_cross_method,
    6: check_symmetries,
    7: check_ladder_duality,
    8: check_renewal,
    9: check_contraction,
    10: check_geometric_sum,
    11: check_one_step,
    12: check_reproducibility,
}


def run_all(ctx: Context, only=None, log=None):
    results = []
    for k, fn in CHECKS.items():
        if only is not None and k not in only:
            continue
        try:
            res = fn(ctx)
        except Exception as e:       # a crash is a failed criterion, not a dead run
            res = CriterionResult(k, fn.__doc__.strip().splitlines()[0], False,
                                  {"error": f"{type(e).__name__}: {e}"})
        results.append(res)
        if log is not None:
            log(res.line())
    return results
