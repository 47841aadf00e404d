"""Command-line entry point: ``bmsgam {fit,simulate,bf-table,ess-bench}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .glm import FitError

COMMON = ("seed", "chains", "out_dir", "family", "prior", "knots")


def _common(sub):
    sub.add_argument("--config", help="key = value file; command-line flags take precedence")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--chains", type=int)
    sub.add_argument("--out-dir", dest="out_dir")
    sub.add_argument("--family", help="bernoulli, poisson or gaussian")
    sub.add_argument("--prior", help="g-prior family, e.g. intrinsic, robust, hyper-g")
    sub.add_argument("--knots", help="knot strategy: even, vs or free")
    sub.add_argument("--n-iter", dest="n_iter", type=int, help="retained iterations per chain")
    sub.add_argument("--burn-in", dest="burn_in", type=int)


def _priors(text):
    if text is None:
        return None
    if text.strip().lower() == "all":
        return list(harness.ALL_PRIORS)
    return [t.strip() for t in text.split(",") if t.strip()]


def _grid(text, kind):
    """``a:b`` (integers, step 1), ``a:b:step`` or a comma list."""
    if ":" in text:
        parts = [float(t) for t in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        lo, hi, step = parts
        if step <= 0 or hi < lo:
            raise ValueError(f"bad range {text!r}")
        vals = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
    else:
        vals = np.array([float(t) for t in text.split(",")])
    return [kind(v) if kind is int else round(float(v), 12) for v in vals]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bmsgam", description="Bayesian model selection for additive models.")
    subs = ap.add_subparsers(dest="command", required=True)

    p = subs.add_parser("fit", help="fit a headered CSV dataset")
    _common(p)
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--response", help="response column name (default y)")

    p = subs.add_parser("simulate", help="replicated simulation on the synthetic designs")
    _common(p)
    p.add_argument("--replicates", type=int)
    p.add_argument("--n", type=int, help="single sample size instead of the family presets")
    p.add_argument("--priors", help="comma-separated priors or 'all' (overrides --prior)")
    p.add_argument("--workers", type=int)

    p = subs.add_parser("bf-table", help="equal-fit log Bayes factors for one added column")
    p.add_argument("--prior", default="all", help="comma-separated priors or 'all'")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--J", dest="J", default="2:50", help="model sizes, a:b[:step] or list")
    p.add_argument("--r2", default="0.1:0.9:0.1", help="pseudo R^2 values, a:b:step or list")
    p.add_argument("--out-dir", dest="out_dir", default=".")

    p = subs.add_parser("ess-bench", help="effective sample size per second for each prior")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--priors", help="comma-separated priors or 'all' (default)")
    return ap


def _config(args):
    keys = COMMON + ("n_iter", "burn_in", "response", "replicates", "n", "workers")
    overrides = {k: getattr(args, k, None) for k in keys}
    return harness.parse_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bf-table":
            path = harness.run_bf_table(_priors(args.prior), args.n, _grid(args.J, int),
                                        _grid(args.r2, float), Path(args.out_dir) / "bf_table.csv")
        else:
            cfg = _config(args)
            if args.command == "fit":
                path = harness.run_fit(cfg, args.data)
            elif args.command == "simulate":
                path = harness.run_simulate(cfg, _priors(args.priors))
            else:
                path = harness.run_ess_bench(cfg, _priors(args.priors))
    except (ValueError, OSError, FitError, NotImplementedError) as exc:
        print(f"bmsgam {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
