"""Configuration, synthetic data, metrics and on-disk artifacts."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .glm import Family, FamilyKind
from .knots import KnotPriorConfig, Strategy
from .marginal import bf_curve
from .samplers import ChainContext, PosteriorDraws, effective_sample_size, posterior_functional, run_chains
from .tcch import GPriorFamily, PriorKind

__all__ = [
    "synth_f",
    "generate_dataset",
    "centered_truth",
    "MetricsRow",
    "rmse_and_coverage",
    "RunConfig",
    "parse_config",
    "load_csv",
    "fit_dataset",
    "run_fit",
    "run_simulate",
    "run_bf_table",
    "run_ess_bench",
    "validate_summary",
    "DEFAULT_SAMPLE_SIZES",
]

DEFAULT_SAMPLE_SIZES = {
    FamilyKind.BERNOULLI: (500, 1000, 2000),
    FamilyKind.POISSON: (50, 100, 200),
    FamilyKind.GAUSSIAN: (100, 200, 400),
}


# ---------------------------------------------------------------------------
# synthetic data


def synth_f(j: int, x):
    """The three uncentered test functions on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    if j == 1:
        return 0.5 * (2 * x**5 + 3 * x**2 + np.cos(3 * np.pi * x) - 1)
    if j == 2:
        u = 3 * x + 1.5
        window = (x > -0.5) & (x < 0.85)
        wiggle = 21 * (3 * x - 2.5) ** 2 / (400 * np.exp(-u)) * np.sin(u**2 * np.pi / 3.2)
        return 21 * u**3 / 8000 + np.where(window, wiggle, 0.0)
    if j == 3:
        return x.copy()
    raise ValueError("test functions are indexed 1, 2, 3")


def generate_dataset(n: int, family: Family | str, seed, sigma: float = 1.0):
    """Simulate ``(design, y, eta)`` with ``eta = f1*(x1) + f2*(x2) + f3*(x3)``.

    Covariates are independent Uniform(-1, 1).  Gaussian responses add
    N(0, sigma^2) noise.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    fam = Family.from_name(family) if isinstance(family, str) else family
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 3))
    eta = sum(synth_f(j + 1, X[:, j]) for j in range(3))
    if fam.kind is FamilyKind.BERNOULLI:
        y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    elif fam.kind is FamilyKind.POISSON:
        y = rng.poisson(np.exp(eta)).astype(float)
    else:
        y = eta + sigma * rng.standard_normal(n)
    return X, y, eta


def centered_truth(j: int, grid, x):
    """``f_j*`` on ``grid`` minus its average over the design values ``x``."""
    return synth_f(j, grid) - float(np.mean(synth_f(j, x)))


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricsRow:
    replicate: int
    prior: str
    covariate: int
    rmse: float
    coverage: np.ndarray
    ess: float
    runtime_seconds: float

    @property
    def mean_coverage(self) -> float:
        return float(np.mean(self.coverage))


def rmse_and_coverage(fp, truths, replicate: int = 0, prior: str = "", ess: float = math.nan,
                      runtime: float = math.nan) -> list[MetricsRow]:
    """RMSE of the posterior mean and pointwise band coverage per covariate.

    ``truths[j]`` must be the centered true function on ``fp.grids[j]``.
    """
    if len(truths) != len(fp.grids):
        raise ValueError("need one truth vector per covariate")
    rows = []
    for j, truth in enumerate(truths):
        truth = np.asarray(truth, dtype=float)
        if truth.shape != fp.mean[j].shape:
            raise ValueError(f"truth for covariate {j} does not match its grid")
        rmse = float(np.sqrt(np.mean((fp.mean[j] - truth) ** 2)))
        cover = ((fp.lower[j] <= truth) & (truth <= fp.upper[j])).astype(int)
        rows.append(MetricsRow(replicate, prior, j + 1, rmse, cover, ess, runtime))
    return rows


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """Settings for the ``fit``, ``simulate`` and ``ess-bench`` commands."""

    family: str = "bernoulli"
    prior: str = "intrinsic"
    knots: str = "vs"
    max_knots: int = 30
    varpi: float = 0.1
    linear_only: tuple = ()
    n_iter: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    grid_size: int = 101
    seed: int = 0
    chains: int = 1
    replicates: int = 1
    n: int = 0
    sigma: float = 1.0
    response: str = "y"
    out_dir: str = "out"
    cache: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.n_iter <= 0 or self.burn_in < 0 or self.thin <= 0:
            raise ValueError("need n_iter > 0, burn_in >= 0, thin > 0")
        if self.n_iter <= self.burn_in:
            raise ValueError("n_iter (retained iterations) must exceed burn_in")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")
        if self.chains < 1 or self.replicates < 1:
            raise ValueError("chains and replicates must be at least 1")
        Family.from_name(self.family)
        GPriorFamily.from_name(self.prior)
        Strategy.from_name(self.knots)

    def family_obj(self) -> Family:
        return Family.from_name(self.family)

    def prior_obj(self) -> GPriorFamily:
        return GPriorFamily.from_name(self.prior)

    def sample_sizes(self) -> tuple[int, ...]:
        if self.n > 0:
            return (self.n,)
        return DEFAULT_SAMPLE_SIZES[self.family_obj().kind]


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    if name not in types:
        raise ValueError(f"unknown configuration key {name!r}; valid keys: {', '.join(sorted(types))}")
    t = types[name]
    if t in ("int", int):
        return int(raw)
    if t in ("float", float):
        return float(raw)
    if t in ("bool", bool):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"{name} must be a boolean, got {raw!r}")
        return low in ("true", "1", "yes")
    if t in ("tuple", tuple):
        return tuple(s.strip().lower() in ("true", "1", "yes") for s in raw.split(",") if s.strip())
    return raw


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a ``key = value`` file (``#`` starts a comment) and apply overrides.

    Keys are the field names of :class:`RunConfig`; ``linear_only`` is a
    comma-separated list of booleans, one per covariate.
    """
    values = {}
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            try:
                values[key] = _coerce(key, raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return RunConfig(**values)


def load_csv(path, response: str = "y"):
    """Headered numeric CSV; ``response`` names the outcome column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        rows = [r for r in reader if any(c.strip() for c in r)]
    if response not in header:
        raise ValueError(f"response column {response!r} not found in {path}; columns: {', '.join(header)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric value ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    k = header.index(response)
    names = [h for i, h in enumerate(header) if i != k]
    if not names:
        raise ValueError(f"{path}: no covariate columns")
    return np.delete(data, k, axis=1), data[:, k], names


# ---------------------------------------------------------------------------
# running


def _grids(design, size):
    return [np.linspace(design[:, j].min(), design[:, j].max(), size) for j in range(design.shape[1])]


def fit_dataset(design, y, cfg: RunConfig, seed=None, prior: str | None = None):
    """Run ``cfg.chains`` chains; return ``(context, combined draws, functional, per-chain ESS)``."""
    fam = cfg.family_obj()
    pr = GPriorFamily.from_name(prior or cfg.prior)
    lin = cfg.linear_only or None
    kcfg = KnotPriorConfig.from_design(design, cfg.knots, cfg.max_knots, cfg.varpi, lin)
    ctx = ChainContext(design, y, fam, pr, kcfg, cache=None if cfg.cache else False)
    chains = run_chains(ctx, cfg.seed if seed is None else seed, cfg.chains,
                        n_iter=cfg.n_iter, burn_in=cfg.burn_in, thin=cfg.thin)
    draws = PosteriorDraws.concat(chains)
    fp = posterior_functional(draws, _grids(design, cfg.grid_size), ctx)
    ess = [effective_sample_size(c.log_post) for c in chains]
    return ctx, draws, fp, ess


def _schema():
    return json.loads(resources.files("bmsgam").joinpath("schemas/summary.schema.json").read_text())


def validate_summary(summary: dict):
    jsonschema.validate(summary, _schema())


def _summary(cfg, names, ctx, draws, fp, ess):
    p = len(names)
    return {
        "family": ctx.family.kind.value,
        "prior": ctx.prior.name,
        "knots": ctx.cfg.strategy.value,
        "n": int(ctx.n),
        "chains": cfg.chains,
        "n_draws": draws.n_draws,
        "covariates": [
            {
                "name": names[j],
                "max_knots": int(ctx.cfg.max_knots[j]),
                "linear_only": bool(ctx.cfg.linear_only[j]),
                "knot_count_posterior": draws.count_posterior(j, ctx.cfg.max_knots[j]).tolist(),
                "grid": fp.grids[j].tolist(),
                "mean": fp.mean[j].tolist(),
                "lower": fp.lower[j].tolist(),
                "upper": fp.upper[j].tolist(),
            }
            for j in range(p)
        ],
        "g_mean": float(np.mean(draws.g)),
        "ess": [float(e) for e in ess],
        "runtime_seconds": float(draws.runtime),
        "acceptance_rates": draws.acceptance_rates(),
        "fit_failures": int(draws.fit_failures),
    }


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def run_fit(cfg: RunConfig, data_path) -> Path:
    """Fit a CSV dataset; writes ``summary.json``, ``trace.csv`` and ``functions.csv``."""
    design, y, names = load_csv(data_path, cfg.response)
    if cfg.linear_only and len(cfg.linear_only) != len(names):
        raise ValueError(f"linear_only lists {len(cfg.linear_only)} flags for {len(names)} covariates")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx, draws, fp, ess = fit_dataset(design, y, cfg)
    summary = _summary(cfg, names, ctx, draws, fp, ess)
    validate_summary(summary)
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    header = ["chain", "draw", "g", "alpha"] + [f"count_{nm}" for nm in names]
    rows = []
    for i in range(draws.n_draws):
        rows.append([int(draws.chain_id[i]), i, _fmt(draws.g[i]), _fmt(draws.alpha[i])]
                    + [int(c) for c in draws.counts[i]])
    _write_rows(out / "trace.csv", header, rows)
    rows = []
    for j, nm in enumerate(names):
        for k in range(fp.grids[j].size):
            rows.append([nm, _fmt(fp.grids[j][k]), _fmt(fp.mean[j][k]), _fmt(fp.lower[j][k]), _fmt(fp.upper[j][k])])
    _write_rows(out / "functions.csv", ["covariate", "x", "mean", "lower", "upper"], rows)
    return out / "summary.json"


def simulate_replicate(cfg: RunConfig, n: int, rep: int, priors, seed_seq) -> list[MetricsRow]:
    """One synthetic dataset fitted under each prior in ``priors``."""
    data_seed, *chain_seeds = seed_seq.spawn(1 + len(priors))
    X, y, _ = generate_dataset(n, cfg.family, data_seed, cfg.sigma)
    rows = []
    for prior, cs in zip(priors, chain_seeds):
        start = time.perf_counter()
        ctx, draws, fp, ess = fit_dataset(X, y, cfg, seed=cs, prior=prior)
        runtime = time.perf_counter() - start
        truths = [centered_truth(j + 1, fp.grids[j], X[:, j]) for j in range(3)]
        rows.extend(rmse_and_coverage(fp, truths, rep, GPriorFamily.from_name(prior).name,
                                      float(np.mean(ess)), runtime))
    return rows


def run_simulate(cfg: RunConfig, priors=None) -> Path:
    """Replicated simulation; writes ``metrics.csv``, ``coverage.csv`` and ``timing.csv``.

    Metrics files depend only on the seed and configuration; wall-clock
    times go to ``timing.csv`` alone.
    """
    priors = [cfg.prior] if priors is None else list(priors)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics, coverage, timing = [], [], []
    root = np.random.SeedSequence(cfg.seed)
    sizes = cfg.sample_sizes()
    jobs = [(n, rep, rs) for n, ss in zip(sizes, root.spawn(len(sizes)))
            for rep, rs in enumerate(ss.spawn(cfg.replicates))]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(simulate_replicate, cfg, n, rep, priors, rs) for n, rep, rs in jobs]
            results = [f.result() for f in futures]
    else:
        results = [simulate_replicate(cfg, n, rep, priors, rs) for n, rep, rs in jobs]
    for (n, _, _), rows in zip(jobs, results):
        for row in rows:
            metrics.append([n, row.replicate, row.prior, row.covariate, _fmt(row.rmse),
                            _fmt(row.mean_coverage), _fmt(row.ess)])
            coverage.append([n, row.replicate, row.prior, row.covariate] + row.coverage.tolist())
            timing.append([n, row.replicate, row.prior, row.covariate, f"{row.runtime_seconds:.3f}"])
    _write_rows(out / "metrics.csv", ["n", "replicate", "prior", "covariate", "rmse", "coverage", "ess"], metrics)
    _write_rows(out / "coverage.csv", ["n", "replicate", "prior", "covariate"]
                + [f"g{k}" for k in range(cfg.grid_size)], coverage)
    _write_rows(out / "timing.csv", ["n", "replicate", "prior", "covariate", "runtime_seconds"], timing)
    return out / "metrics.csv"


ALL_PRIORS = [k.value for k in PriorKind if k is not PriorKind.CUSTOM]


def run_bf_table(priors, n: int, J_grid, r2_grid, out_path) -> Path:
    """Equal-fit log Bayes factors for one added column, as CSV."""
    rows = []
    for name in priors:
        for r in bf_curve(GPriorFamily.from_name(name), n, J_grid, r2_grid):
            rows.append([r.prior, r.n, r.J, _fmt(r.r2), _fmt(r.log_bf)])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_rows(out_path, ["prior", "n", "J", "r2", "log_bf"], rows)
    return out_path


def run_ess_bench(cfg: RunConfig, priors=None) -> Path:
    """Effective sample size per second of the log-posterior trace, per prior."""
    priors = ALL_PRIORS if priors is None else list(priors)
    n = cfg.sample_sizes()[0]
    X, y, _ = generate_dataset(n, cfg.family, cfg.seed, cfg.sigma)
    rows = []
    for prior in priors:
        _, draws, _, ess = fit_dataset(X, y, cfg, prior=prior)
        total = float(np.sum(ess))
        rows.append([GPriorFamily.from_name(prior).name, n, _fmt(total), f"{draws.runtime:.3f}",
                     f"{total / draws.runtime:.3f}" if draws.runtime > 0 else "nan"])
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "ess.csv", ["prior", "n", "ess", "runtime_seconds", "ess_per_second"], rows)
    return out / "ess.csv"
