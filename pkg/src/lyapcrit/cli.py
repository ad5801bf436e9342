"""Command-line runner: `lyapcrit <subcommand> [options]`.

Settings are merged as defaults < --config file < LYAPCRIT_* environment
variables < command-line flags. Every run writes manifest.json and its
result files under --out-dir.

Exit codes: 0 success, 1 failed check, 2 usage error or bad input,
3 convergence failure.
"""

import argparse
import datetime as dt
import json
import math
import os
import sys

from . import __version__
from .acceptance import DEFAULT_SEED, Context, run_all
from .dh import dh_constants, fit_kappas_from_sweep, kappa1_from_edge, lyapunov_dh
from .disorder import parse_law
from .errors import ConvergenceError
from .gridfn import EstimateCI, GridSpec
from .ladder import f_table_direct, f_table_via_j
from .matprod import contraction_mean_tau, lyapunov_direct, n_gamma_sigma
from .operator import OperatorConfig, geometric_sum_check, point_mass_risk
from .persistence import ResultBundle, RunManifest, Table, _plain, dumps_json, save, table_dict
from .projective import XChainConfig, lyapunov_furstenberg
from .ychain import edge_fits, invariant_fixed_point, stationarity_defect

ENV_PREFIX = "LYAPCRIT_"

# key -> (type, default)
OPTIONS = {
    "law": (str, "gaussian"),
    "gamma": (float, 10.0),
    "gammas": (str, "8,12,16,24"),
    "method": (str, "furstenberg"),
    "steps": (int, 1_000_000),
    "burnin": (int, None),
    "blocks": (int, 16),
    "paths": (int, 100_000),
    "reps": (int, 500),
    "grid_min": (float, -30.0),
    "grid_max": (float, 60.0),
    "grid_step": (float, 0.01),
    "tol": (float, 1e-10),
    "max_iter": (int, 5000),
    "seed": (int, DEFAULT_SEED),
    "threads": (int, 1),
    "out_dir": (str, "lyapcrit_out"),
    "format": (str, "csv"),
    "quick": (bool, False),
}
METHODS = ("direct", "furstenberg", "dh")


class UsageError(ValueError):
    pass


def _coerce(key, raw):
    typ = OPTIONS[key][0]
    if raw is None or isinstance(raw, typ) and not isinstance(raw, str):
        return raw
    s = str(raw).strip()
    if typ is bool:
        if s.lower() in ("1", "true", "yes", "on"):
            return True
        if s.lower() in ("0", "false", "no", "off", ""):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return typ(float(s)) if typ is int else typ(s)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw!r}") from None


def read_config_file(path) -> dict:
    """Flat key=value lines; '#' starts a comment; keys use flag names."""
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise UsageError(f"cannot read config file {path}: {e.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            k = k.lstrip("-").replace("-", "_")
            if k not in OPTIONS:
                raise UsageError(f"{path}:{lineno}: unknown key {k!r}")
            out[k] = _coerce(k, v)
    return out


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for k in OPTIONS:
        v = environ.get(ENV_PREFIX + k.upper())
        if v is not None:
            out[k] = _coerce(k, v)
    return out


def _add_options(p, suppress=True):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="key=value settings file")
    p.add_argument("--law", default=d, help="disorder law, e.g. gaussian:sigma=1, logistic, powertail:beta=8")
    p.add_argument("--gamma", type=float, default=d)
    p.add_argument("--gammas", default=d, help="comma-separated gamma values for sweep")
    p.add_argument("--method", choices=METHODS, default=d)
    p.add_argument("--steps", type=int, default=d, help="steps per block")
    p.add_argument("--burnin", type=int, default=d)
    p.add_argument("--blocks", type=int, default=d)
    p.add_argument("--paths", type=int, default=d, help="paths for ladder-check")
    p.add_argument("--reps", type=int, default=d, help="products for contraction")
    p.add_argument("--grid-min", dest="grid_min", type=float, default=d)
    p.add_argument("--grid-max", dest="grid_max", type=float, default=d)
    p.add_argument("--grid-step", dest="grid_step", type=float, default=d)
    p.add_argument("--tol", type=float, default=d)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=d)
    p.add_argument("--seed", type=int, default=d)
    p.add_argument("--threads", type=int, default=d)
    p.add_argument("--out-dir", dest="out_dir", default=d)
    p.add_argument("--format", choices=("csv", "json"), default=d)
    p.add_argument("--quick", action="store_true", default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lyapcrit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lyapcrit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "lyapunov": "one Lyapunov estimate (direct, furstenberg or dh)",
        "sweep": "estimates over a gamma grid and the kappa fit",
        "invariant": "edge invariant measure of the Y chain",
        "ladder-check": "direct versus J-chain ladder estimates",
        "contraction": "mean tau and the geometric-sum diagnostic",
        "validate": "run the acceptance checks",
    }
    for name, h in helps.items():
        _add_options(sub.add_parser(name, help=h, description=h))
    return parser


def resolve_settings(ns: argparse.Namespace, environ=None) -> dict:
    cfg = {k: v[1] for k, v in OPTIONS.items()}
    given = vars(ns)
    if given.get("config"):
        cfg.update(read_config_file(given["config"]))
    cfg.update(env_overrides(environ))
    for k in OPTIONS:
        if k in given:
            cfg[k] = given[k]
    if cfg["method"] not in METHODS:
        raise UsageError(f"unknown method {cfg['method']!r}")
    if cfg["format"] not in ("csv", "json"):
        raise UsageError(f"unknown format {cfg['format']!r}")
    if cfg["threads"] < 1:
        raise UsageError("threads must be at least 1")
    return cfg


class Run:
    """Collects artifacts of one subcommand and writes them with a manifest."""

    def __init__(self, command, cfg, quiet=False):
        self.command = command
        self.cfg = cfg
        self.quiet = quiet
        self.started = _now()
        self.artifacts = {}

    def table(self, name, columns, rows):
        t = Table(list(columns), [list(r) for r in rows])
        self.artifacts[name] = t if self.cfg["format"] == "csv" else table_dict(t)

    def record(self, name, obj):
        self.artifacts[name] = obj

    def say(self, text, err=False):
        if not self.quiet or err:
            print(text, file=sys.stderr if err else sys.stdout)

    def finish(self):
        snap = {k: v for k, v in self.cfg.items() if k != "out_dir"}
        snap["command"] = self.command
        m = RunManifest(snap, self.cfg["seed"], __version__, self.started)
        bundle = ResultBundle(m, self.artifacts)
        m.finished = _now()
        return save(bundle, self.cfg["out_dir"])


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _grid(cfg):
    return GridSpec(cfg["grid_min"], cfg["grid_max"], cfg["grid_step"])


def _estimate(cfg, law, gamma, method, fits=None):
    if method == "direct":
        return lyapunov_direct(gamma, law, cfg["steps"], cfg["blocks"], cfg["seed"], threads=cfg["threads"])
    if method == "furstenberg":
        xc = XChainConfig(gamma, law, cfg["steps"], cfg["burnin"], cfg["seed"])
        return lyapunov_furstenberg(xc, cfg["blocks"], cfg["threads"])[0]
    value = lyapunov_dh(gamma, fits)
    return EstimateCI(value, 0.0, 2)


def cmd_lyapunov(cfg, run: Run) -> int:
    law = parse_law(cfg["law"])
    gamma, method = cfg["gamma"], cfg["method"]
    fits = edge_fits(law, _grid(cfg), cfg["tol"], cfg["max_iter"]) if method == "dh" else None
    est = _estimate(cfg, law, gamma, method, fits)
    out = {"gamma": gamma, "method": method, "estimate": est.value, "stderr": est.std_error,
           "ci_level": est.level, "law": law.spec, "seed": cfg["seed"]}
    if method == "dh":
        out.update(dh_constants(gamma, *fits).as_dict())
    else:
        out.update(steps=cfg["steps"], blocks=cfg["blocks"])
    run.record("lyapunov", out)
    run.say(dumps_json(out).rstrip())
    return 0


def cmd_sweep(cfg, run: Run) -> int:
    law = parse_law(cfg["law"])
    try:
        gammas = [float(s) for s in cfg["gammas"].split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"bad gamma list {cfg['gammas']!r}") from None
    if not gammas:
        raise UsageError("empty gamma list")
    method = cfg["method"]
    fits = edge_fits(law, _grid(cfg), cfg["tol"], cfg["max_iter"]) if method == "dh" else None
    ests = [_estimate(cfg, law, g, method, fits) for g in gammas]
    fit = None
    if len(set(gammas)) >= 4:
        fit = fit_kappas_from_sweep(gammas, ests, max_rel_ci=None)
        run.record("sweep_fit", dict(fit.as_dict(), law=law.spec, method=method))
    rows = []
    for g, e in zip(gammas, ests):
        pred = fit.kappa1 / (g + fit.kappa2) if fit else math.nan
        rows.append([g, e.value, e.std_error, pred, e.value - pred])
    run.table("sweep", ["gamma", "estimate", "stderr", "prediction", "residual"], rows)
    for r in rows:
        run.say(f"gamma={r[0]:g} estimate={r[1]:.6g} stderr={r[2]:.3g}")
    if fit:
        run.say(f"kappa1={fit.kappa1:.6g} +- {fit.se1:.2g}  kappa2={fit.kappa2:.6g} +- {fit.se2:.2g}")
    else:
        run.say("fewer than four gamma values: kappa fit skipped", err=True)
    return 0


def cmd_invariant(cfg, run: Run) -> int:
    law = parse_law(cfg["law"])
    fit = invariant_fixed_point(law, _grid(cfg), cfg["tol"], cfg["max_iter"])
    info = dict(fit.meta(), kappa1=kappa1_from_edge(fit), defect=stationarity_defect(fit, law))
    run.record("invariant", (fit.F, fit.meta()))
    run.record("invariant_summary", info)
    run.say(dumps_json(info).rstrip())
    return 0


def cmd_ladder_check(cfg, run: Run) -> int:
    law = parse_law(cfg["law"])
    th, xs = [0.0, 1.0, 3.0], [5.0, 10.0, 20.0]
    ys = [x + 1 for x in xs]
    n = cfg["paths"]
    a = f_table_direct(th, law, xs, ys, n, cfg["seed"], threads=cfg["threads"])
    b = f_table_via_j(th, law, xs, ys, n, cfg["seed"] + 1, threads=cfg["threads"])
    rows, agree_all = [], True
    for ra, rb in zip(a.rows(), b.rows()):
        se = math.hypot(ra[4], rb[4])
        zs = abs(ra[3] - rb[3]) / se if se > 0 else (0.0 if ra[3] == rb[3] else math.inf)
        ok = zs <= a.estimates[0][0].z
        agree_all &= ok
        rows.append([ra[0], ra[1], ra[2], ra[3], ra[4], rb[3], rb[4], zs, ok])
    run.table("ladder_check", ["theta", "x", "y", "direct", "direct_se", "via_j", "via_j_se",
                               "z_score", "agree"], rows)
    summary = {"paths": n, "discarded_direct": a.discarded_fraction,
               "discarded_j": b.discarded_fraction, "k_max": b.k_max, "all_agree": agree_all}
    run.record("ladder_check_summary", summary)
    run.say(dumps_json(summary).rstrip())
    return 0 if agree_all else 1


def cmd_contraction(cfg, run: Run) -> int:
    law = parse_law(cfg["law"])
    gamma = cfg["gamma"]
    n = n_gamma_sigma(gamma, law.sigma)
    est = contraction_mean_tau(gamma, law, n, cfg["reps"], cfg["seed"], cfg["threads"])
    ocfg = OperatorConfig(gamma, law)
    G = point_mass_risk(ocfg.grid, 1.0) - point_mass_risk(ocfg.grid, -1.0)
    gs = geometric_sum_check(ocfg, G)
    out = {"gamma": gamma, "law": law.spec, "n": n, "reps": cfg["reps"], "mean_tau": est.value,
           "stderr": est.std_error, "tau_below_half": est.value <= 0.5 + 3 * est.std_error,
           "geometric_total": gs.total, "geometric_bound": gs.bound,
           "last_decile_fraction": gs.last_decile_fraction()}
    run.record("contraction", out)
    run.table("geometric_sum", ["n", "term", "partial_sum", "bound"],
              [[i, t, s, gs.bound] for i, (t, s) in enumerate(zip(gs.terms, gs.partial_sums))])
    run.say(dumps_json(out).rstrip())
    return 0


def cmd_validate(cfg, run: Run) -> int:
    ctx = Context(cfg["seed"], cfg["quick"], cfg["threads"])
    results = run_all(ctx, log=run.say)
    run.table("validate", ["criterion", "title", "passed"],
              [[r.number, r.title, r.passed] for r in results])
    run.record("validate_details", {str(r.number): r.details for r in results})
    failed = [r for r in results if not r.passed]
    for r in failed:
        run.say(f"FAILED criterion {r.number}: {r.title}: {json.dumps(_plain(r.details))}", err=True)
    run.say(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


COMMANDS = {
    "lyapunov": cmd_lyapunov,
    "sweep": cmd_sweep,
    "invariant": cmd_invariant,
    "ladder-check": cmd_ladder_check,
    "contraction": cmd_contraction,
    "validate": cmd_validate,
}


def main(argv=None, quiet: bool = False, environ=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = resolve_settings(ns, environ)
        run = Run(ns.command, cfg, quiet)
        code = COMMANDS[ns.command](cfg, run)
        run.finish()
        return code
    except ConvergenceError as e:
        print(f"lyapcrit: convergence failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"lyapcrit: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
