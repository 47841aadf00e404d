"""Priors over knot configurations.

Three strategies share a truncated geometric prior on the number of knots
per covariate, ``q(u) ∝ (1 - varpi)^u varpi`` for ``u = 0..M``:

* even-knot: knots sit at the ``k/(u+1)`` quantiles, so the count alone
  determines the configuration;
* VS-knot: knots form a subset of a fixed candidate set, each subset of a
  given size equally likely;
* free-knot: knots are continuous, uniformly distributed given their count
  (density ``u! / range^u`` for the ordered vector).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .splines import KnotState, knot_state_from_design, quantile_knots

__all__ = ["Strategy", "KnotPriorConfig", "log_q_count", "log_prior_even", "log_prior_vs",
           "log_prior_free", "log_prior"]


class Strategy(enum.Enum):
    EVEN = "even"
    VS = "vs"
    FREE = "free"

    @classmethod
    def from_name(cls, name: str) -> "Strategy":
        key = name.strip().lower().replace("_", "-")
        aliases = {"even-knot": "even", "ek": "even", "vs-knot": "vs", "free-knot": "free", "fk": "free"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown knot strategy {name!r}; expected even, vs or free") from None


@dataclass(frozen=True, eq=False)
class KnotPriorConfig:
    """Knot prior settings for every covariate.

    Use :meth:`from_design` to derive candidates and quantile knots from data.
    ``max_knots`` is capped at ``#unique values - 2`` per covariate so the
    quantile rule always yields distinct interior knots.
    """

    strategy: Strategy
    max_knots: tuple[int, ...]
    varpi: float = 0.1
    linear_only: tuple[bool, ...] = ()
    candidates: tuple[tuple[float, ...], ...] = ()
    design: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not 0 < self.varpi < 1:
            raise ValueError("varpi must lie in (0, 1)")
        p = len(self.max_knots)
        if not self.linear_only:
            object.__setattr__(self, "linear_only", (False,) * p)
        if len(self.linear_only) != p:
            raise ValueError("linear_only must have one entry per covariate")
        if any(m < 0 for m in self.max_knots):
            raise ValueError("max_knots must be non-negative")
        for cand in self.candidates:
            if any(b <= a for a, b in zip(cand[:-1], cand[1:])):
                raise ValueError("candidates must be strictly increasing")
        object.__setattr__(self, "_even_cache", {})

    @classmethod
    def from_design(cls, design, strategy: Strategy | str = Strategy.VS, max_knots: int | Sequence[int] = 30,
                    varpi: float = 0.1, linear_only: Sequence[bool] | None = None) -> "KnotPriorConfig":
        design = np.asarray(design, dtype=float)
        n, p = design.shape
        if isinstance(strategy, str):
            strategy = Strategy.from_name(strategy)
        M = [int(max_knots)] * p if np.isscalar(max_knots) else [int(m) for m in max_knots]
        lin = (False,) * p if linear_only is None else tuple(bool(v) for v in linear_only)
        if len(M) != p or len(lin) != p:
            raise ValueError("per-covariate settings must match the number of covariates")
        caps = []
        for j in range(p):
            if lin[j]:
                caps.append(0)
                continue
            n_unique = np.unique(design[:, j]).size
            caps.append(max(0, min(M[j], n_unique - 2, n - 2)))
        cands = tuple(tuple(quantile_knots(design[:, j], caps[j])) if not lin[j] else ()
                      for j in range(p))
        return cls(strategy, tuple(caps), varpi, lin, cands, design)

    @property
    def p(self) -> int:
        return len(self.max_knots)

    def initial_state(self) -> KnotState:
        if self.design is None:
            raise ValueError("configuration was built without a design")
        return knot_state_from_design(self.design, self.linear_only)

    def even_knots(self, j: int, k: int) -> tuple[float, ...]:
        """Quantile knots of covariate ``j`` for count ``k``."""
        if k == 0:
            return ()
        hit = self._even_cache.get((j, k))
        if hit is None:
            if self.design is None:
                raise ValueError("configuration was built without a design")
            hit = self._even_cache[(j, k)] = tuple(quantile_knots(self.design[:, j], k))
        return hit


def log_q_count(u: int, cfg: KnotPriorConfig, j: int = 0) -> float:
    """Unnormalized truncated geometric log mass for ``u`` knots on covariate ``j``."""
    if cfg.linear_only[j]:
        return 0.0 if u == 0 else -math.inf
    if u < 0 or u > cfg.max_knots[j]:
        return -math.inf
    return u * math.log1p(-cfg.varpi) + math.log(cfg.varpi)


@lru_cache(maxsize=4096)
def _log_binom(M: int, k: int) -> float:
    return float(gammaln(M + 1) - gammaln(k + 1) - gammaln(M - k + 1))


def log_prior_even(xi: KnotState, cfg: KnotPriorConfig, admissible: bool = True) -> float:
    """Even-knot prior: count prior if every covariate uses its quantile knots.

    ``admissible=False`` encodes a failed rank or properness check.
    """
    if not admissible:
        return -math.inf
    total = 0.0
    for j, c in enumerate(xi.covariates):
        lq = log_q_count(c.count, cfg, j)
        if lq == -math.inf:
            return -math.inf
        if c.count and c.interior != cfg.even_knots(j, c.count):
            return -math.inf
        total += lq
    return total


def log_prior_vs(xi: KnotState, cfg: KnotPriorConfig, admissible: bool = True) -> float:
    """VS-knot prior: ``q(|xi_j|) / C(M_j, |xi_j|)`` for subsets of the candidates."""
    if not admissible:
        return -math.inf
    total = 0.0
    for j, c in enumerate(xi.covariates):
        lq = log_q_count(c.count, cfg, j)
        if lq == -math.inf:
            return -math.inf
        if c.count:
            cand = set(cfg.candidates[j])
            if any(t not in cand for t in c.interior):
                return -math.inf
        total += lq - _log_binom(cfg.max_knots[j], c.count)
    return total


def log_prior_free(xi: KnotState, cfg: KnotPriorConfig, admissible: bool = True) -> float:
    """Free-knot prior: ``q(|xi_j|) |xi_j|! / (upper - lower)^|xi_j|`` for ordered knots in range."""
    if not admissible:
        return -math.inf
    total = 0.0
    for j, c in enumerate(xi.covariates):
        k = c.count
        lq = log_q_count(k, cfg, j)
        if lq == -math.inf:
            return -math.inf
        if k and not (c.low < c.interior[0] and c.interior[-1] < c.high):
            return -math.inf
        total += lq + float(gammaln(k + 1)) - k * math.log(c.high - c.low)
    return total


def log_prior(xi: KnotState, cfg: KnotPriorConfig, admissible: bool = True) -> float:
    """Dispatch on ``cfg.strategy``."""
    if cfg.strategy is Strategy.EVEN:
        return log_prior_even(xi, cfg, admissible)
    if cfg.strategy is Strategy.VS:
        return log_prior_vs(xi, cfg, admissible)
    return log_prior_free(xi, cfg, admissible)
