"""Batch experiment driver.

Subcommands
-----------
``rates``     closed-form scale functions and constants as CSV
``oracle``    one oracle computation as JSON {operation, inputs, value, error_bound}
``estimate``  run an experiment config: results.csv + manifest.json
``simulate``  walk occupation statistics as CSV
``compare``   verdict table from a results.csv

Config files are flat ``key = value`` text with dotted sections; decimals
stay strings until the last moment so outputs echo them verbatim.  A
manifest.json produced by ``estimate`` parses as a config again and
reproduces the run byte for byte (wall times live only in the manifest).

Exit codes: 0 success, 1 config/usage error, 2 partial failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__, oracle, rates
from .estimators import (_cp_upper_log, single_site_tail,
                         zn_tail_conditional, zn_tail_naive)
from .scenery import SceneryDist
from .walk import WalkSpec, simulate_path

RESULT_COLUMNS = ["d", "q", "b", "family", "n", "t", "r", "method",
                  "replicas", "seed", "shards", "p_hat", "log_p", "stderr",
                  "rel_err", "alpha_n", "beta_n", "paper_constant",
                  "minimized_constant", "status"]

_METHODS = ("Naive", "ConditionalLastSite", "SingleSite", "SingleSiteOracle")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Parsed experiment description; raw strings kept for provenance."""

    raw: dict                      # flat key -> string, echoed into outputs
    family: str
    q: float
    b: float
    d: int
    kind: str
    grid: list                     # [(n, t, r_string)]
    methods: list
    replicas: int
    seed: int
    shards: int
    out_dir: str
    eps: float
    eta: float
    Kd: float | None

    @classmethod
    def from_mapping(cls, kv: dict, lines: dict | None = None) -> "ExperimentConfig":
        lines = lines or {}

        def fail(key, msg):
            where = f" (line {lines[key]})" if key in lines else ""
            raise ConfigError(f"config field {key!r}{where}: {msg}")

        def need(key):
            if key not in kv:
                raise ConfigError(f"missing config field {key!r}")
            return kv[key]

        def parse(key, conv, default=None, required=False):
            if key not in kv:
                if required:
                    need(key)
                return default
            try:
                return conv(kv[key])
            except (ValueError, TypeError) as e:
                fail(key, str(e))

        family = parse("scenery.family", str, required=True)
        q = parse("scenery.q", float, required=True)
        b = parse("scenery.b", float, required=True)
        d = parse("walk.d", int, required=True)
        kind = parse("walk.kind", str, "SimpleSymmetric")
        try:
            SceneryDist(family, q, b)
        except ValueError as e:
            raise ConfigError(f"config fields 'scenery.*': {e}") from None
        try:
            WalkSpec(d, kind)
        except ValueError as e:
            key = "walk.d" if "dimension" in str(e) else "walk.kind"
            fail(key, str(e))

        ns = parse("grid.n", _int_list, required=True)
        if not ns or any(n < 1 for n in ns):
            fail("grid.n", "need at least one horizon n >= 1")
        if "grid.t" in kv and "grid.r" in kv:
            fail("grid.t", "give either grid.t or grid.r, not both")
        grid = []
        if "grid.r" in kv:
            rs = parse("grid.r", _float_list, required=True)
            for n in ns:
                for r in rs:
                    grid.append((n, float(n) ** -r, _fmt(r)))
        else:
            ts = parse("grid.t", _float_list, required=True)
            if any(t <= 0 for t in ts):
                fail("grid.t", "deviation levels must be positive")
            for n in ns:
                for t in ts:
                    rr = -math.log(t) / math.log(n) if n > 1 else 0.0
                    grid.append((n, t, _fmt(rr)))
        methods = parse("methods", _str_list, required=True)
        for m in methods:
            if m not in _METHODS:
                fail("methods", f"unknown method {m!r} (choose from {_METHODS})")
        replicas = parse("replicas", int, required=True)
        if replicas < 1:
            fail("replicas", "need at least one replica")
        seed = parse("seed", int, required=True)
        shards = parse("shards", int, 1)
        if shards < 1:
            fail("shards", "need shards >= 1")
        out_dir = parse("output.dir", str, "out")
        eps = parse("lemma1.eps", float, 0.1)
        eta = parse("lemma1.eta", float, 0.1)
        kd = parse("rates.Kd", float, None)
        if d <= 2 and kd is None:
            raise ConfigError("missing config field 'rates.Kd' (required for d <= 2)")
        return cls(dict(kv), family, q, b, d, kind, grid, methods, replicas,
                   seed, shards, out_dir, eps, eta, kd)


def _int_list(s):
    return [int(x.strip()) for x in str(s).split(",") if x.strip()]


def _float_list(s):
    return [float(x.strip()) for x in str(s).split(",") if x.strip()]


def _str_list(s):
    return [x.strip() for x in str(s).split(",") if x.strip()]


def _fmt(x) -> str:
    if isinstance(x, float):
        if x != x:
            return "nan"
        if x == -math.inf:
            return "-inf"
        if x == math.inf:
            return "inf"
        return repr(x)
    return str(x)


def parse_config_text(text: str) -> tuple[dict, dict]:
    """Flat key = value parser; returns (mapping, key -> line number)."""
    kv, lines = {}, {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.split("#", 1)[0].strip()
        if not key:
            raise ConfigError(f"line {i}: empty key")
        if key in kv:
            raise ConfigError(f"line {i}: duplicate key {key!r}")
        kv[key] = value
        lines[key] = i
    return kv, lines


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        payload = json.loads(text)
        kv = payload.get("config", payload)
        return ExperimentConfig.from_mapping({k: str(v) for k, v in kv.items()})
    kv, lines = parse_config_text(text)
    return ExperimentConfig.from_mapping(kv, lines)


# ---------------------------------------------------------------------------
# estimate: the experiment driver
# ---------------------------------------------------------------------------

def _rate_columns(cfg: ExperimentConfig, n: int, t: float):
    if cfg.d >= 3:
        f0, _ = oracle.return_prob_series(cfg.d)
        params = rates.RateParams(d=cfg.d, q=cfg.q, c=cfg.b ** -cfg.q,
                                  n=n, t=t, f0=f0)
    else:
        params = rates.RateParams(d=cfg.d, q=cfg.q, c=cfg.b ** -cfg.q,
                                  n=n, t=t, Kd=cfg.Kd)
    alpha = rates.alpha_n(params).alpha
    beta = rates.beta_n(params)
    const = rates.theorem_constant(params)
    return alpha, beta, const.paper_value, const.minimized_value


def _run_method(cfg: ExperimentConfig, method: str, n: int, t: float):
    spec = WalkSpec(cfg.d, cfg.kind)
    dist = SceneryDist(cfg.family, cfg.q, cfg.b)
    if method == "Naive":
        return zn_tail_naive(spec, dist, n, t, cfg.replicas, cfg.seed, cfg.shards)
    if method == "ConditionalLastSite":
        return zn_tail_conditional(spec, dist, n, t, cfg.replicas, cfg.seed,
                                   cfg.shards)
    if method == "SingleSite":
        return single_site_tail(spec, dist, n, t, cfg.replicas, cfg.seed,
                                cfg.shards)
    if method == "SingleSiteOracle":
        return single_site_tail(spec, dist, n, t, cfg.replicas, cfg.seed,
                                cfg.shards, surrogate=True)
    raise ConfigError(f"unknown method {method!r}")


def run(cfg: ExperimentConfig) -> int:
    """Execute every grid point x method; write results.csv + manifest.json.

    Returns the process exit code (0 clean, 2 if any row failed)."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    wall = {}
    failed = False
    work = sorted((n, t, rstr, m) for (n, t, rstr) in cfg.grid
                  for m in cfg.methods)
    for n, t, rstr, method in work:
        t0 = time.perf_counter()
        base = {"d": cfg.raw.get("walk.d", str(cfg.d)),
                "q": cfg.raw.get("scenery.q", _fmt(cfg.q)),
                "b": cfg.raw.get("scenery.b", _fmt(cfg.b)),
                "family": cfg.family, "n": str(n), "t": _fmt(t), "r": rstr,
                "method": method, "replicas": str(cfg.replicas),
                "seed": str(cfg.seed), "shards": str(cfg.shards)}
        try:
            est = _run_method(cfg, method, n, t)
            alpha, beta, cpaper, cmin = _rate_columns(cfg, n, t)
            base.update({"p_hat": _fmt(est.p_hat), "log_p": _fmt(est.log_p),
                         "stderr": _fmt(est.stderr), "rel_err": _fmt(est.rel_err),
                         "alpha_n": _fmt(alpha), "beta_n": _fmt(beta),
                         "paper_constant": _fmt(cpaper),
                         "minimized_constant": _fmt(cmin),
                         "status": est.note or "ok"})
        except Exception as e:  # partial failures recorded per row
            failed = True
            for col in RESULT_COLUMNS:
                base.setdefault(col, "")
            base["status"] = f"error: {e}"
        rows.append(base)
        wall[f"{method}@n={n},t={_fmt(t)}"] = round(time.perf_counter() - t0, 6)

    csv_path = os.path.join(cfg.out_dir, "results.csv")
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(row.get(c, "") for c in RESULT_COLUMNS) + "\n")

    import numba
    import scipy
    manifest = {
        "config": cfg.raw,
        "versions": {"rwrslab": __version__,
                     "python": sys.version.split()[0],
                     "numpy": np.__version__,
                     "scipy": scipy.__version__,
                     "numba": numba.__version__},
        "threads": os.environ.get("RWRSLAB_THREADS", ""),
        "wall_times_s": wall,
    }
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 2 if failed else 0


# ---------------------------------------------------------------------------
# compare: verdicts against the theoretical asymptotics
# ---------------------------------------------------------------------------

COMPARE_COLUMNS = ["d", "q", "family", "method", "n", "t", "r",
                   "ratio_paper", "ratio_paper_err", "ratio_minimized",
                   "ratio_minimized_err", "censored", "trend_paper",
                   "trend_minimized"]


def _read_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [l.rstrip("\n") for l in fh if l.strip()]
    header = lines[0].split(",")
    missing = [c for c in RESULT_COLUMNS if c not in header]
    if missing:
        raise ConfigError(f"results.csv missing columns: {missing}")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def compare(results_path: str) -> list[dict]:
    """Per-row ratio log p / (-beta * constant) plus monotone-trend verdicts.

    Rows with p_hat = 0 are censored: a one-sided ratio from the exact
    zero-hit upper CI is emitted instead.  d = 1 rows carry both candidate
    constants' ratios.  Verdicts are per (d, q, family, method, r) group
    across increasing n: 'toward-1' iff |ratio - 1| is non-increasing.
    """
    rows = _read_csv(results_path)
    out = []
    for row in rows:
        if row.get("status", "").startswith("error"):
            continue
        beta = float(row["beta_n"])
        replicas = int(row["replicas"])
        p_hat = float(row["p_hat"])
        rel = float(row["rel_err"]) if row["rel_err"] not in ("", "inf") else math.inf
        censored = p_hat == 0.0
        if censored:
            log_p = _cp_upper_log(replicas)
            rel = 0.0
        else:
            log_p = float(row["log_p"])
        rec = {k: row[k] for k in ("d", "q", "family", "method", "n", "t", "r")}
        for tag, col in (("paper", "paper_constant"),
                         ("minimized", "minimized_constant")):
            c = float(row[col])
            rec[f"ratio_{tag}"] = _fmt(log_p / (-beta * c))
            rec[f"ratio_{tag}_err"] = _fmt(rel / (beta * c))
        rec["censored"] = "censored" if censored else ""
        out.append(rec)

    groups = {}
    for rec in out:
        key = (rec["d"], rec["q"], rec["family"], rec["method"], rec["r"])
        groups.setdefault(key, []).append(rec)
    for recs in groups.values():
        recs.sort(key=lambda r: int(r["n"]))
        for tag in ("paper", "minimized"):
            devs = [abs(float(r[f"ratio_{tag}"]) - 1.0) for r in recs]
            if len(devs) < 2:
                verdict = "single-point"
            elif all(b <= a + 1e-12 for a, b in zip(devs, devs[1:])):
                verdict = "toward-1"
            else:
                verdict = "not-toward-1"
            for r in recs:
                r[f"trend_{tag}"] = verdict
    out.sort(key=lambda r: (r["d"], r["q"], r["method"], r["r"], int(r["n"])))
    return out


def _write_table(rows, columns, out):
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(str(row.get(c, "")) for c in columns) + "\n")


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    return run(cfg)


def _cmd_compare(args) -> int:
    rows = compare(args.results)
    dest = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        _write_table(rows, COMPARE_COLUMNS, dest)
    finally:
        if args.out:
            dest.close()
    return 0


def _cmd_rates(args) -> int:
    if args.d <= 2 and args.kd is None:
        raise ConfigError("--kd is required for d <= 2")
    if not args.t and not args.r:
        raise ConfigError("give deviation levels via --t or --r")
    if args.d >= 3 and args.f0 is None:
        args.f0 = oracle.return_prob_series(args.d)[0]
    rows = []
    for n in args.n:
        for t in (args.t if args.t else [float(n) ** -r for r in args.r]):
            p = rates.RateParams(d=args.d, q=args.q, c=args.c, n=n, t=t,
                                 Kd=args.kd, f0=args.f0)
            const = rates.theorem_constant(p)
            rows.append({"d": args.d, "q": _fmt(args.q), "c": _fmt(args.c),
                         "K_or_f0": _fmt(args.kd if args.d <= 2 else args.f0),
                         "n": n, "t": _fmt(t),
                         "alpha_n": _fmt(rates.alpha_n(p).alpha),
                         "beta_n": _fmt(rates.beta_n(p)),
                         "paper_constant": _fmt(const.paper_value),
                         "minimized_constant": _fmt(const.minimized_value),
                         "discrepant": str(const.discrepant).lower()})
    dest = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        _write_table(rows, ["d", "q", "c", "K_or_f0", "n", "t", "alpha_n",
                            "beta_n", "paper_constant", "minimized_constant",
                            "discrepant"], dest)
    finally:
        if args.out:
            dest.close()
    return 0


def _cmd_oracle(args) -> int:
    inputs = {}
    if args.op == "return_prob_series":
        inputs = {"d": args.d}
        value, bound = oracle.return_prob_series(args.d)
    elif args.op == "minimize_I_tilde":
        inputs = {"d": args.d, "q": args.q, "kappa": args.kappa, "s": args.s}
        value, argmin = oracle.minimize_I_tilde(args.d, args.q, args.kappa, args.s)
        bound = 1e-12
        inputs["argmin_y"] = argmin
    elif args.op == "local_time_tail":
        inputs = {"d": 1, "n": args.n, "a": args.a}
        value = math.exp(oracle.local_time_log_upper_tail(args.n, args.a))
        bound = abs(value) * 1e-12
    elif args.op == "enumerate_paths":
        inputs = {"d": args.d, "n": args.n}
        pmf = oracle.enumerate_paths(args.d, args.n)
        value = {str(k): v for k, v in sorted(pmf.probs.items())}
        bound = 0.0
    elif args.op == "weighted_sum_cdf":
        weights = [float(w) for w in args.weights.split(",")]
        inputs = {"family": args.family, "q": args.q, "b": args.b,
                  "weights": weights, "s": args.s, "h": args.h}
        dist = SceneryDist(args.family, args.q, args.b)
        value, bound = oracle.weighted_sum_cdf_grid(dist, weights, args.s,
                                                    h=args.h)
    else:
        raise ConfigError(f"unknown oracle operation {args.op!r}")
    json.dump({"operation": args.op, "inputs": inputs, "value": value,
               "error_bound": bound}, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _cmd_simulate(args) -> int:
    spec = WalkSpec(args.d)
    rows = []
    for i in range(args.replicas):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(args.seed, 6, i)))
        fld = simulate_path(spec, args.n, rng)
        rows.append({"replica": i, "ell0": fld.ell0, "lmax": fld.lmax,
                     "range_size": fld.range_size})
    dest = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        _write_table(rows, ["replica", "ell0", "lmax", "range_size"], dest)
    finally:
        if args.out:
            dest.close()
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rwrslab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("estimate", help="run an experiment config")
    pe.add_argument("--config", required=True)
    pe.add_argument("--out-dir", default=None)
    pe.set_defaults(fn=_cmd_estimate)

    pc = sub.add_parser("compare", help="verdict table from results.csv")
    pc.add_argument("results")
    pc.add_argument("--out", default=None)
    pc.set_defaults(fn=_cmd_compare)

    pr = sub.add_parser("rates", help="scale functions and constants")
    pr.add_argument("--d", type=int, required=True)
    pr.add_argument("--q", type=float, required=True)
    pr.add_argument("--c", type=float, default=1.0)
    pr.add_argument("--kd", type=float, default=None)
    pr.add_argument("--f0", type=float, default=None)
    pr.add_argument("--n", type=float, nargs="+", required=True)
    pr.add_argument("--t", type=float, nargs="+", default=None)
    pr.add_argument("--r", type=float, nargs="+", default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(fn=_cmd_rates)

    po = sub.add_parser("oracle", help="one oracle computation as JSON")
    po.add_argument("--op", required=True,
                    choices=["return_prob_series", "minimize_I_tilde",
                             "local_time_tail", "enumerate_paths",
                             "weighted_sum_cdf"])
    po.add_argument("--d", type=int, default=3)
    po.add_argument("--q", type=float, default=0.5)
    po.add_argument("--kappa", type=float, default=1.0)
    po.add_argument("--s", type=float, default=1.0)
    po.add_argument("--n", type=int, default=4)
    po.add_argument("--a", type=int, default=1)
    po.add_argument("--family", default="SymmetricWeibull")
    po.add_argument("--b", type=float, default=1.0)
    po.add_argument("--weights", default="1.0")
    po.add_argument("--h", type=float, default=0.05)
    po.set_defaults(fn=_cmd_oracle)

    ps = sub.add_parser("simulate", help="walk occupation statistics")
    ps.add_argument("--d", type=int, required=True)
    ps.add_argument("--n", type=int, required=True)
    ps.add_argument("--replicas", type=int, default=1)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default=None)
    ps.set_defaults(fn=_cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if not e.code else 1
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
