"""Posterior exploration over knot configurations and conditional draws.

Knot moves depend on the data only through the marginal likelihood, so a
chain over knots runs on ``log p(Y | xi) + log pi(xi)``.  At retained
iterations ``g``, the intercept and the spline coefficients are drawn from
their exact conditionals given the current model.
"""

from __future__ import annotations

import itertools
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .gauss import GaussFitState, fit_gauss, log_marginal_gauss_tcch, sample_gauss_conditionals, sample_gauss_g
from .glm import Family, FamilyKind, FitError, FitState, fit_mle
from .knots import KnotPriorConfig, Strategy, log_prior
from .marginal import ModelCache, log_marginal_tcch
from .splines import BasisMatrix, KnotState, build_basis, eval_natural_basis, insert_knot, remove_knot
from .tcch import (
    GPriorFamily,
    ImproperPriorError,
    PointMass,
    PriorKind,
    SliceState,
    tcch_sample_exact,
    tcch_sample_slice,
)

__all__ = [
    "ChainContext",
    "ChainState",
    "PosteriorDraws",
    "FunctionalPosterior",
    "enumerate_even",
    "enumerate_models",
    "even_knot_mh",
    "vs_knot_mcmc",
    "free_knot_rjmcmc",
    "sample_g",
    "sample_coefficients",
    "run_chain",
    "run_chains",
    "posterior_functional",
    "effective_sample_size",
]

EXACT_G_KINDS = (PriorKind.UNIFORM, PriorKind.HYPER_G, PriorKind.ZS_ADAPTED, PriorKind.ROBUST)
SLICE_STEPS = 10
COLLISION_TOL = 1e-12


# ---------------------------------------------------------------------------
# conditional draws


def sample_g(fit: FitState, prior: GPriorFamily, rng, slice_state: SliceState | None = None,
             n: int | None = None, steps: int = SLICE_STEPS):
    """Draw ``g`` from its conditional posterior given a fitted GLM.

    ``1/(1+g)`` is tCCH with updated hyperparameters.  Priors whose
    posterior reduces to a truncated gamma are sampled exactly; the others
    advance ``slice_state`` by ``steps`` slice-sampling transitions.

    Returns
    -------
    g : float
    slice_state : SliceState or None
        State to pass to the next call (created on first use).
    """
    n = fit.n if n is None else n
    hyper = prior.resolve(n, fit.J)
    if isinstance(hyper, PointMass):
        return float(hyper.g), slice_state
    p = hyper.posterior(fit.J, fit.q_wald)
    exact = prior.kind in EXACT_G_KINDS or (prior.kind is PriorKind.CUSTOM and p.b == 1 and p.kappa == 1)
    if exact:
        v = tcch_sample_exact(p, rng)
    else:
        if slice_state is None:
            slice_state = SliceState.start(p, rng, 1)
        tcch_sample_slice(p, slice_state, rng, steps=steps)
        v = float(slice_state.w[0]) / p.nu
    return 1.0 / v - 1.0, slice_state


def sample_coefficients(fit: FitState, g: float, rng):
    """Draw ``(alpha, beta)`` given ``g`` under the Laplace-approximated posterior."""
    if not g > 0:
        raise ValueError("g must be positive")
    sd_alpha = 1.0 / math.sqrt(fit.info_trace)
    if fit.J == 0:
        return fit.alpha_hat + sd_alpha * rng.standard_normal(), np.zeros(0)
    shrink = g / (1.0 + g)
    z = rng.standard_normal(fit.J)
    dev = linalg.solve_triangular(fit.btjb_chol, z, lower=True, trans="T")
    beta = shrink * fit.beta_hat + math.sqrt(shrink) * dev
    alpha = fit.alpha_hat - fit.alpha_shift @ (beta - fit.beta_hat) + sd_alpha * rng.standard_normal()
    return float(alpha), beta


# ---------------------------------------------------------------------------
# model evaluation


class _GlmModel:
    def __init__(self, y, family: Family, prior: GPriorFamily):
        self.y = family.check_response(y)
        self.family = family
        self.prior = prior
        self.n = self.y.size

    def fit(self, basis, warm):
        return fit_mle(basis, self.y, self.family, start_eta=warm)

    def log_marginal(self, fit):
        try:
            return log_marginal_tcch(fit, self.prior, self.n)
        except ImproperPriorError:
            return -math.inf

    @staticmethod
    def warm(fit):
        return fit.eta_hat

    def draw(self, fit, rng, slice_state):
        g, slice_state = sample_g(fit, self.prior, rng, slice_state, self.n)
        alpha, beta = sample_coefficients(fit, g, rng)
        return g, alpha, beta, slice_state


class _GaussModel:
    def __init__(self, y, prior: GPriorFamily):
        self.y = np.asarray(y, dtype=float)
        self.prior = prior
        self.n = self.y.size

    def fit(self, basis, warm):
        return fit_gauss(basis, self.y)

    def log_marginal(self, fit):
        try:
            return log_marginal_gauss_tcch(fit, self.prior)
        except ImproperPriorError:
            return -math.inf

    @staticmethod
    def warm(fit):
        return None

    def draw(self, fit, rng, slice_state):
        g = sample_gauss_g(fit, self.prior, rng)
        _, alpha, beta = sample_gauss_conditionals(fit, g, rng)
        return g, alpha, beta, slice_state


class ChainContext:
    """Data, priors and shared caches for one posterior.

    Parameters
    ----------
    design : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    family : Family
        Gaussian families use the unknown-precision model.
    prior : GPriorFamily
    knot_cfg : KnotPriorConfig
    cache : bool or ModelCache, optional
        Memoize log marginals by knot configuration.  Defaults to on for the
        even-knot and VS strategies and off for free knots.
    """

    def __init__(self, design, y, family: Family, prior: GPriorFamily, knot_cfg: KnotPriorConfig,
                 cache: bool | ModelCache | None = None):
        self.design = np.asarray(design, dtype=float)
        if self.design.ndim != 2 or self.design.shape[0] != np.asarray(y).size:
            raise ValueError("design must be n x p and match the response length")
        self.family = family
        self.prior = prior
        self.cfg = knot_cfg
        if family.kind is FamilyKind.GAUSSIAN:
            self.model = _GaussModel(y, prior)
        else:
            self.model = _GlmModel(y, family, prior)
        self.n = self.model.n
        if cache is None:
            cache = knot_cfg.strategy is not Strategy.FREE
        if cache is True:
            cache = ModelCache()
        self.cache: ModelCache | None = cache if isinstance(cache, ModelCache) else None
        self.fit_failures = 0
        self._grid_cols: dict = {}

    def evaluate(self, knots: KnotState, builder, warm=None):
        """Return ``(log marginal, basis or None, fit or None)``.

        ``builder`` is a zero-argument callable producing the basis; it is
        not called on a cache hit.
        """
        key = knots.key() if self.cache is not None else None
        if key is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit, None, None
        basis = builder()
        try:
            fit = self.model.fit(basis, warm)
            lm = self.model.log_marginal(fit)
        except FitError:
            self.fit_failures += 1
            fit, lm = None, -math.inf
        if key is not None:
            self.cache.put(key, lm)
        return lm, basis, fit

    def initial_state(self, rng, knots: KnotState | None = None) -> "ChainState":
        knots = self.cfg.initial_state() if knots is None else knots
        basis = build_basis(self.design, knots)
        lp = log_prior(knots, self.cfg)
        fit = self.model.fit(basis, None)
        lm = self.model.log_marginal(fit)
        if not np.isfinite(lm + lp):
            raise ValueError("initial knot configuration has zero posterior probability")
        if self.cache is not None:
            self.cache.put(knots.key(), lm)
        return ChainState(knots, basis, lm, lp, fit, self.model.warm(fit))


@dataclass
class ChainState:
    knots: KnotState
    basis: BasisMatrix
    log_marg: float
    log_prior: float
    fit: FitState | GaussFitState | None
    warm: np.ndarray | None = None
    slice_state: SliceState | None = None
    iteration: int = 0
    proposed: dict = field(default_factory=lambda: defaultdict(int))
    accepted: dict = field(default_factory=lambda: defaultdict(int))

    @property
    def log_post(self) -> float:
        return self.log_marg + self.log_prior


# ---------------------------------------------------------------------------
# knot moves


def _free_covariates(cfg: KnotPriorConfig):
    return [j for j in range(cfg.p) if not cfg.linear_only[j] and cfg.max_knots[j] > 0]


def _metropolis(ctx: ChainContext, state: ChainState, knots: KnotState, builder, log_q_ratio, move, rng):
    state.proposed[move] += 1
    lp = log_prior(knots, ctx.cfg)
    if lp == -math.inf:
        return state
    lm, basis, fit = ctx.evaluate(knots, builder, state.warm)
    if lm == -math.inf:
        return state
    log_alpha = lm + lp - state.log_post + log_q_ratio
    if log_alpha >= 0 or math.log(rng.random()) < log_alpha:
        state.accepted[move] += 1
        state.knots = knots
        state.basis = basis if basis is not None else builder()
        state.log_marg, state.log_prior = lm, lp
        state.fit = fit
        if fit is not None:
            state.warm = ctx.model.warm(fit)
    return state


def even_knot_mh(ctx: ChainContext, state: ChainState, rng) -> ChainState:
    """One even-knot Metropolis-Hastings transition.

    Picks a covariate uniformly and proposes one more or one fewer knot with
    probability 1/2 each; proposals outside ``0..M_j`` are rejected, which
    keeps the proposal symmetric.
    """
    free = _free_covariates(ctx.cfg)
    state.iteration += 1
    if not free:
        return state
    j = free[rng.integers(len(free))]
    k = state.knots[j].count + (1 if rng.random() < 0.5 else -1)
    move = "even"
    if k < 0 or k > ctx.cfg.max_knots[j]:
        state.proposed[move] += 1
        return state
    knots = state.knots.replace(j, ctx.cfg.even_knots(j, k))
    return _metropolis(ctx, state, knots, lambda: build_basis(ctx.design, knots), 0.0, move, rng)


def _vs_weights(k, M):
    legal = {"add": k < M, "delete": k > 0, "swap": 0 < k < M}
    m = sum(legal.values())
    return {name: (1.0 / m if ok else 0.0) for name, ok in legal.items()}


def vs_knot_mcmc(ctx: ChainContext, state: ChainState, rng) -> ChainState:
    """One VS-knot transition: add, delete or swap a candidate knot."""
    free = _free_covariates(ctx.cfg)
    state.iteration += 1
    if not free:
        return state
    j = free[rng.integers(len(free))]
    cand = ctx.cfg.candidates[j]
    M = ctx.cfg.max_knots[j]
    present = state.knots[j].interior
    pset = set(present)
    absent = [t for t in cand if t not in pset]
    k = len(present)
    w = _vs_weights(k, M)
    u = rng.random()
    move = "add" if u < w["add"] else ("delete" if u < w["add"] + w["delete"] else "swap")
    B = state.basis
    if move == "add":
        t = absent[rng.integers(len(absent))]
        knots = state.knots.with_knot(j, t)
        wd = _vs_weights(k + 1, M)["delete"]
        lq = math.log(wd / (k + 1)) - math.log(w["add"] / (M - k))
        builder = lambda: insert_knot(B, j, t)  # noqa: E731
    elif move == "delete":
        t = present[rng.integers(k)]
        knots = state.knots.without_knot(j, t)
        wa = _vs_weights(k - 1, M)["add"]
        lq = math.log(wa / (M - k + 1)) - math.log(w["delete"] / k)
        builder = lambda: remove_knot(B, j, t)  # noqa: E731
    else:
        t_out = present[rng.integers(k)]
        t_in = absent[rng.integers(len(absent))]
        knots = state.knots.without_knot(j, t_out).with_knot(j, t_in)
        lq = 0.0
        builder = lambda: insert_knot(remove_knot(B, j, t_out), j, t_in)  # noqa: E731
    return _metropolis(ctx, state, knots, builder, lq, move, rng)


def _fk_weights(k, M):
    legal = {"birth": k < M, "death": k > 0, "relocate": k > 0}
    m = sum(legal.values())
    return {name: (1.0 / m if ok else 0.0) for name, ok in legal.items()}


def free_knot_rjmcmc(ctx: ChainContext, state: ChainState, rng) -> ChainState:
    """One reversible-jump transition: birth, death or relocation of a knot.

    Coefficients are integrated out, so the dimension change needs no
    Jacobian; births draw the new knot uniformly on the covariate range.
    """
    free = _free_covariates(ctx.cfg)
    state.iteration += 1
    if not free:
        return state
    j = free[rng.integers(len(free))]
    c = state.knots[j]
    L, U = c.low, c.high
    M = ctx.cfg.max_knots[j]
    k = c.count
    w = _fk_weights(k, M)
    u = rng.random()
    move = "birth" if u < w["birth"] else ("death" if u < w["birth"] + w["death"] else "relocate")
    B = state.basis

    def collides(t, existing):
        return (t - L) <= COLLISION_TOL or (U - t) <= COLLISION_TOL or any(
            abs(t - s) <= COLLISION_TOL for s in existing)

    if move == "birth":
        t = L + (U - L) * rng.random()
        if collides(t, c.interior):
            state.proposed[move] += 1
            return state
        knots = state.knots.with_knot(j, t)
        wd = _fk_weights(k + 1, M)["death"]
        lq = math.log(wd / (k + 1)) - math.log(w["birth"] / (U - L))
        builder = lambda: insert_knot(B, j, t)  # noqa: E731
    elif move == "death":
        t = c.interior[rng.integers(k)]
        knots = state.knots.without_knot(j, t)
        wb = _fk_weights(k - 1, M)["birth"]
        lq = math.log(wb / (U - L)) - math.log(w["death"] / k)
        builder = lambda: remove_knot(B, j, t)  # noqa: E731
    else:
        t_out = c.interior[rng.integers(k)]
        t_in = L + (U - L) * rng.random()
        rest = [s for s in c.interior if s != t_out]
        if collides(t_in, rest):
            state.proposed[move] += 1
            return state
        knots = state.knots.without_knot(j, t_out).with_knot(j, t_in)
        lq = 0.0
        builder = lambda: insert_knot(remove_knot(B, j, t_out), j, t_in)  # noqa: E731
    return _metropolis(ctx, state, knots, builder, lq, move, rng)


_MOVES = {Strategy.EVEN: even_knot_mh, Strategy.VS: vs_knot_mcmc, Strategy.FREE: free_knot_rjmcmc}


# ---------------------------------------------------------------------------
# enumeration


def enumerate_models(ctx: ChainContext, states):
    """Exact posterior over an explicit list of knot states.

    Returns
    -------
    list of (KnotState, probability)
    """
    logs = []
    states = list(states)
    for knots in states:
        lp = log_prior(knots, ctx.cfg)
        if lp == -math.inf:
            logs.append(-math.inf)
            continue
        lm, _, _ = ctx.evaluate(knots, lambda k=knots: build_basis(ctx.design, k))
        logs.append(lm + lp)
    logs = np.array(logs)
    top = np.max(logs)
    if not np.isfinite(top):
        raise ValueError("no admissible model among the enumerated states")
    w = np.exp(logs - top)
    w /= w.sum()
    return list(zip(states, w.tolist()))


def enumerate_even(ctx: ChainContext, budget: int = 100_000):
    """Exact posterior over all even-knot count vectors.

    Returns
    -------
    dict mapping count tuples to posterior probabilities.
    """
    cfg = ctx.cfg
    ranges = [range(1) if cfg.linear_only[j] else range(cfg.max_knots[j] + 1) for j in range(cfg.p)]
    size = math.prod(len(r) for r in ranges)
    if size > budget:
        raise ValueError(f"{size} even-knot models exceed the enumeration budget {budget}; use even_knot_mh")
    base = cfg.initial_state()
    states = []
    for counts in itertools.product(*ranges):
        knots = base
        for j, k in enumerate(counts):
            if k:
                knots = knots.replace(j, cfg.even_knots(j, k))
        states.append(knots)
    return {s.counts: p for s, p in enumerate_models(ctx, states)}


# ---------------------------------------------------------------------------
# chains


@dataclass
class PosteriorDraws:
    """Retained draws of one or more chains.

    ``knots[i]``, ``g[i]``, ``alpha[i]`` and ``beta[i]`` describe draw ``i``;
    ``beta[i]`` follows the column order of the basis for ``knots[i]``.
    ``log_post`` holds the log posterior (up to a constant) at every
    post-burn-in iteration.
    """

    design: np.ndarray
    knots: list
    g: np.ndarray
    alpha: np.ndarray
    beta: list
    log_post: np.ndarray
    counts: np.ndarray
    proposed: dict
    accepted: dict
    fit_failures: int = 0
    runtime: float = 0.0
    chain_id: np.ndarray | None = None

    @property
    def n_draws(self) -> int:
        return len(self.knots)

    def acceptance_rates(self) -> dict:
        return {m: (self.accepted.get(m, 0) / p if p else 0.0) for m, p in sorted(self.proposed.items())}

    def count_posterior(self, j: int, max_count: int | None = None) -> np.ndarray:
        c = self.counts[:, j]
        size = (int(c.max()) if max_count is None else max_count) + 1
        return np.bincount(c, minlength=size)[:size] / c.size

    @classmethod
    def concat(cls, parts: list["PosteriorDraws"]) -> "PosteriorDraws":
        proposed, accepted = defaultdict(int), defaultdict(int)
        for p in parts:
            for m, v in p.proposed.items():
                proposed[m] += v
            for m, v in p.accepted.items():
                accepted[m] += v
        return cls(
            parts[0].design,
            [k for p in parts for k in p.knots],
            np.concatenate([p.g for p in parts]),
            np.concatenate([p.alpha for p in parts]),
            [b for p in parts for b in p.beta],
            np.concatenate([p.log_post for p in parts]),
            np.concatenate([p.counts for p in parts]),
            dict(proposed),
            dict(accepted),
            sum(p.fit_failures for p in parts),
            sum(p.runtime for p in parts),
            np.concatenate([np.full(p.n_draws, i) for i, p in enumerate(parts)]),
        )


def run_chain(ctx: ChainContext, rng, n_iter: int = 10_000, burn_in: int = 2_000, thin: int = 1,
              initial: KnotState | None = None, sample_parameters: bool = True) -> PosteriorDraws:
    """Run one chain of ``burn_in + n_iter`` knot transitions.

    Every ``thin``-th post-burn-in iteration is retained; at retained
    iterations ``g``, ``alpha`` and ``beta`` are drawn given the current model.
    """
    if n_iter <= 0 or burn_in < 0 or thin <= 0:
        raise ValueError("need n_iter > 0, burn_in >= 0 and thin > 0")
    start = time.perf_counter()
    move = _MOVES[ctx.cfg.strategy]
    state = ctx.initial_state(rng, initial)
    failures0 = ctx.fit_failures
    knots, g, alpha, beta, counts = [], [], [], [], []
    log_post = np.empty(n_iter)
    for it in range(burn_in + n_iter):
        move(ctx, state, rng)
        if it < burn_in:
            continue
        i = it - burn_in
        log_post[i] = state.log_post
        if i % thin:
            continue
        knots.append(state.knots)
        counts.append(state.knots.counts)
        if sample_parameters:
            if state.fit is None:
                state.fit = ctx.model.fit(state.basis, state.warm)
                state.warm = ctx.model.warm(state.fit)
            gi, ai, bi, state.slice_state = ctx.model.draw(state.fit, rng, state.slice_state)
        else:
            gi, ai, bi = math.nan, math.nan, np.zeros(0)
        g.append(gi)
        alpha.append(ai)
        beta.append(bi)
    return PosteriorDraws(
        ctx.design, knots, np.array(g), np.array(alpha), beta, log_post,
        np.array(counts, dtype=int).reshape(len(counts), ctx.cfg.p),
        dict(state.proposed), dict(state.accepted), ctx.fit_failures - failures0,
        time.perf_counter() - start,
    )


def run_chains(ctx: ChainContext, seed, n_chains: int = 1, **kwargs) -> list[PosteriorDraws]:
    """Run independent chains with streams spawned from ``seed`` (int or SeedSequence)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(n_chains)
    return [run_chain(ctx, np.random.default_rng(s), **kwargs) for s in streams]


# ---------------------------------------------------------------------------
# functionals


@dataclass
class FunctionalPosterior:
    """Draws of each centered component function on its grid, with summaries."""

    grids: list
    draws: list
    mean: list
    lower: list
    upper: list
    level: float


def posterior_functional(draws: PosteriorDraws, grids, ctx: ChainContext | None = None,
                         level: float = 0.95) -> FunctionalPosterior:
    """Evaluate every component ``f_j`` on ``grids[j]`` for each retained draw.

    Functions are centered at the design points, matching the basis.  Grid
    points outside the observed range use the natural spline's linear
    continuation.  Bands are equal-tailed pointwise credible intervals.
    """
    design = draws.design
    p = design.shape[1]
    if len(grids) != p:
        raise ValueError("need one grid per covariate")
    grids = [np.asarray(gr, dtype=float) for gr in grids]
    cache = ctx._grid_cols if ctx is not None else {}
    out = [np.empty((draws.n_draws, gr.size)) for gr in grids]
    lows = [float(design[:, j].min()) for j in range(p)]
    highs = [float(design[:, j].max()) for j in range(p)]
    means = [float(design[:, j].mean()) for j in range(p)]
    gkeys = [gr.tobytes() for gr in grids]

    def column(j, t):
        key = (j, t, gkeys[j])
        col = cache.get(key)
        if col is None:
            if t is None:
                col = grids[j] - means[j]
            else:
                col = (eval_natural_basis(grids[j], lows[j], highs[j], t)
                       - eval_natural_basis(design[:, j], lows[j], highs[j], t).mean())
            cache[key] = col
        return col

    mats: dict = {}
    for i, (knots, beta) in enumerate(zip(draws.knots, draws.beta)):
        pos = 0
        for j, c in enumerate(knots.covariates):
            width = 1 + c.count
            key = (j, c.interior)
            C = mats.get(key)
            if C is None:
                C = np.column_stack([column(j, t) for t in (None,) + c.interior])
                mats[key] = C
            out[j][i] = C @ beta[pos:pos + width] if beta.size else 0.0
            pos += width
    tail = 50.0 * (1 - level)
    mean = [f.mean(axis=0) for f in out]
    lower = [np.percentile(f, tail, axis=0) for f in out]
    upper = [np.percentile(f, 100 - tail, axis=0) for f in out]
    return FunctionalPosterior(grids, out, mean, lower, upper, level)


# ---------------------------------------------------------------------------
# diagnostics


def effective_sample_size(trace) -> float:
    """Effective sample size by the initial monotone positive sequence estimator.

    A constant trace is assigned ESS equal to its length.
    """
    x = np.asarray(trace, dtype=float)
    N = x.size
    if N < 10:
        raise ValueError("trace must have at least 10 values")
    x = x - x.mean()
    if not np.any(x):
        return float(N)
    nfft = 1 << (2 * N - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:N] / N
    rho = acov / acov[0]
    n_pairs = N // 2
    gam = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    total = 0.0
    prev = math.inf
    for gm in gam:
        if gm <= 0:
            break
        gm = min(gm, prev)
        total += gm
        prev = gm
    tau = max(-1.0 + 2.0 * total, 1.0 / N)
    return float(N / tau)
