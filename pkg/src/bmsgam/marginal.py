"""Laplace-approximated marginal likelihoods under g-priors and their mixtures."""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

from scipy.special import betaln

from .glm import FitState
from .specfun import log_phi1
from .tcch import GPriorFamily, GPriorHyper, PointMass, tcch_log_moment

__all__ = [
    "log_marginal_fixed_g",
    "log_marginal_tcch",
    "log_marginal",
    "log_bayes_factor",
    "bf_curve",
    "BFRow",
    "ModelCache",
]


def log_marginal_fixed_g(fit: FitState, g: float, J: int | None = None) -> float:
    """Log marginal likelihood for a fixed ``g``.

    ``loglik - log(tr J_n)/2 - (J/2) log(1+g) - Q/(2(1+g))``.  Constants
    common to all models (powers of 2 pi from the intercept integral) are
    omitted, so only differences between models are meaningful.
    """
    if not g > 0:
        raise ValueError("g must be positive")
    J = fit.J if J is None else J
    return (
        fit.loglik_at_mle
        - 0.5 * math.log(fit.info_trace)
        - 0.5 * J * math.log1p(g)
        - fit.q_wald / (2.0 * (1.0 + g))
    )


@lru_cache(maxsize=4096)
def _log_phi1_cached(alpha, beta, gamma, x, y):
    return log_phi1(alpha, beta, gamma, x, y)


def _log_mixture_term(hyper: GPriorHyper, J: int, Q: float) -> float:
    """Everything in the mixture marginal except ``loglik - log(tr J)/2``."""
    a, b, r, s, nu, kappa = hyper.a, hyper.b, hyper.r, hyper.s, hyper.nu, hyper.kappa
    out = -0.5 * J * math.log(nu) - Q / (2.0 * nu)
    if J == 0 and Q == 0:
        return out
    out += float(betaln((a + J) / 2, b / 2) - betaln(a / 2, b / 2))
    out += log_phi1(b / 2, r, (a + b + J) / 2, (s + Q) / (2 * nu), 1 - kappa)
    out -= _log_phi1_cached(b / 2, r, (a + b) / 2, s / (2 * nu), 1 - kappa)
    return out


def log_marginal_tcch(fit: FitState, prior: GPriorFamily, n: int, J: int | None = None,
                      hyper: GPriorHyper | PointMass | None = None) -> float:
    """Log marginal likelihood with ``g`` integrated over a tCCH mixture.

    Parameters
    ----------
    fit : FitState
    prior : GPriorFamily
    n : int
        Sample size used to resolve the prior.
    J : int, optional
        Number of spline columns; defaults to ``fit.J``.
    hyper : GPriorHyper or PointMass, optional
        Use these hyperparameters instead of resolving ``prior`` at ``(n, J)``.

    Raises
    ------
    ImproperPriorError
        Beta-prime prior with ``J >= n - 1``.
    """
    J = fit.J if J is None else J
    if hyper is None:
        hyper = prior.resolve(n, J)
    if isinstance(hyper, PointMass):
        return log_marginal_fixed_g(fit, hyper.g, J)
    base = fit.loglik_at_mle - 0.5 * math.log(fit.info_trace)
    return base + _log_mixture_term(hyper, J, fit.q_wald)


log_marginal = log_marginal_tcch


def log_bayes_factor(m1: float, m2: float) -> float:
    """log BF of model 1 against model 2 from their log marginals."""
    return m1 - m2


@dataclass(frozen=True)
class BFRow:
    prior: str
    n: int
    J: int
    r2: float
    log_bf: float


def bf_curve(prior: GPriorFamily, n: int, J_grid: Iterable[int], r2_grid: Iterable[float], k: int = 1):
    """Log Bayes factor of a model with ``J`` columns against one with ``J - k``
    columns and the same fitted predictor.

    With equal fits the Bayes factor equals the posterior mean of
    ``(1+g)^(-k/2)`` under the smaller model, with Wald statistic
    ``Q = -n log(1 - R^2)``.  For priors whose hyperparameters depend on the
    model size, both models share the hyperparameters of the smaller one.

    Returns
    -------
    list of BFRow
    """
    J_grid = list(J_grid)
    r2_grid = list(r2_grid)
    if not J_grid or not r2_grid:
        raise ValueError("grids must be non-empty")
    rows = []
    for J in J_grid:
        J2 = J - k
        if J2 < 0:
            raise ValueError(f"J={J} is smaller than k={k}")
        hyper = prior.resolve(n, J2)
        for r2 in r2_grid:
            if not 0 <= r2 < 1:
                raise ValueError("pseudo R^2 must lie in [0, 1)")
            q = -n * math.log1p(-r2)
            if isinstance(hyper, PointMass):
                lbf = -0.5 * k * math.log1p(hyper.g)
            else:
                lbf = tcch_log_moment(k / 2, hyper.posterior(J2, q))
            rows.append(BFRow(prior.name, n, J, float(r2), float(lbf)))
    return rows


class ModelCache:
    """Bounded LRU map from a model key to ``(log marginal, summary)``.

    Lookups may run concurrently; insertions are serialized by a lock.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def __contains__(self, key):
        return key in self._data

    def get(self, key):
        try:
            value = self._data[key]
        except KeyError:
            self.misses += 1
            return None
        self.hits += 1
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
        return value

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()
            self.hits = self.misses = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0
