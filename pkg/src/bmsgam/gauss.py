"""Gaussian additive regression with unknown precision.

With the reference prior ``pi(alpha, phi) ∝ 1/phi`` and the usual g-prior on
``beta``, the marginal likelihood depends on the data only through ``n``,
``J``, the null sum of squares and the coefficient of determination ``R^2``.
Mixing over ``g`` gives closed forms in terms of Phi1 / 1F1 (when ``r = 0``
or ``kappa = 1``) or Appell F1 / 2F1 (when ``s = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import betaln, expit, gammaln

from .glm import RankDeficientError, _as_matrix, _checked_cholesky
from .specfun import log_appell_f1, log_hyp2f1, log_phi1
from .tcch import GPriorFamily, GPriorHyper, PointMass, PriorKind

__all__ = [
    "GaussFitState",
    "fit_gauss",
    "log_marginal_null",
    "log_marginal_gauss_fixed_g",
    "log_marginal_gauss_tcch",
    "log_g_posterior_v",
    "sample_gauss_conditionals",
    "sample_gauss_g",
]


@dataclass(frozen=True, eq=False)
class GaussFitState:
    """Least-squares summary of one Gaussian model.

    ``btb_chol`` is the lower Cholesky factor of ``B^T B``.
    """

    r2: float
    sse_null: float
    beta_hat: np.ndarray
    y_bar: float
    n: int
    J: int
    btb_chol: np.ndarray

    @property
    def q_wald(self) -> float:
        return self.r2


def fit_gauss(B, y) -> GaussFitState:
    """Least squares for centered basis ``B`` (columns with mean zero).

    Raises
    ------
    RankDeficientError
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    Bm = _as_matrix(B, n)
    if Bm.shape[0] != n:
        raise ValueError("basis and response differ in length")
    if n < 3:
        raise ValueError("need at least 3 observations")
    y_bar = float(y.mean())
    yc = y - y_bar
    sse0 = float(yc @ yc)
    if not sse0 > 0:
        raise ValueError("response is constant; the null sum of squares is zero")
    J = Bm.shape[1]
    if J == 0:
        return GaussFitState(0.0, sse0, np.zeros(0), y_bar, n, 0, np.zeros((0, 0)))
    if J >= n - 1:
        raise RankDeficientError("more spline columns than residual degrees of freedom")
    # intercept column is orthogonal to centered B, so only B^T B matters
    Bc = Bm - Bm.mean(axis=0)
    Ls, d = _checked_cholesky(Bc.T @ Bc)
    beta = linalg.cho_solve((Ls, True), (Bc.T @ yc) / d) / d
    fitted = Bc @ beta
    r2 = float(fitted @ fitted) / sse0
    r2 = min(max(r2, 0.0), np.nextafter(1.0, 0.0))
    chol = Ls * d[:, None]
    return GaussFitState(r2, sse0, beta, y_bar, n, J, chol)


def log_marginal_null(fit: GaussFitState) -> float:
    """log p(Y | intercept-only model)."""
    m = (fit.n - 1) / 2
    return -0.5 * math.log(fit.n) - m * math.log(2 * math.pi) + float(gammaln(m)) - m * math.log(fit.sse_null / 2)


def log_marginal_gauss_fixed_g(fit: GaussFitState, g: float) -> float:
    """log p(Y | g, model)."""
    if not g > 0:
        raise ValueError("g must be positive")
    n, J = fit.n, fit.J
    return (
        log_marginal_null(fit)
        + 0.5 * (n - J - 1) * math.log1p(g)
        - 0.5 * (n - 1) * math.log1p(g * (1 - fit.r2))
    )


def _branch(h: GPriorHyper) -> str:
    if h.r == 0 or h.kappa == 1:
        return "r0"
    if h.s == 0:
        return "s0"
    raise NotImplementedError("Gaussian marginal needs r = 0, kappa = 1 or s = 0")


def log_marginal_gauss_tcch(fit: GaussFitState, prior: GPriorFamily,
                            hyper: GPriorHyper | PointMass | None = None) -> float:
    """log p(Y | model) with ``g`` integrated over a tCCH mixture.

    Raises
    ------
    NotImplementedError
        Hyperparameters with ``r != 0``, ``kappa != 1`` and ``s != 0`` together.
    ImproperPriorError
        Beta-prime prior with ``J >= n - 1``.
    """
    n, J, R2 = fit.n, fit.J, fit.r2
    if hyper is None:
        hyper = prior.resolve(n, J)
    if isinstance(hyper, PointMass):
        return log_marginal_gauss_fixed_g(fit, hyper.g)
    a, b, r, s, nu, kappa = hyper.a, hyper.b, hyper.r, hyper.s, hyper.nu, hyper.kappa
    base = log_marginal_null(fit)
    if J == 0:
        return base
    lbeta = float(betaln((a + J) / 2, b / 2) - betaln(a / 2, b / 2))
    if prior.kind is PriorKind.BETA_PRIME and hyper == prior.resolve(n, J):
        return base + lbeta - 0.5 * b * math.log1p(-R2)
    if _branch(hyper) == "r0":
        y = R2 / (nu - (nu - 1) * R2)
        return (
            base
            - 0.5 * J * math.log(nu)
            - 0.5 * (n - 1) * math.log1p(-(1 - 1 / nu) * R2)
            + lbeta
            + log_phi1(b / 2, (n - 1) / 2, (a + b + J) / 2, s / (2 * nu), y)
            - log_phi1(b / 2, 0.0, (a + b) / 2, s / (2 * nu), 0.0)
        )
    x = 1 - kappa
    y = 1 - kappa - R2 * kappa / ((1 - R2) * nu)
    return (
        base
        + 0.5 * (a + J - 2 * r) * math.log(kappa)
        - 0.5 * J * math.log(nu)
        - 0.5 * (n - 1) * math.log1p(-R2)
        + lbeta
        + log_appell_f1((a + J) / 2, (a + b + J + 1 - n - 2 * r) / 2, (n - 1) / 2, (a + b + J) / 2, x, y)
        - log_hyp2f1(r, b / 2, (a + b) / 2, x)
    )


def log_g_posterior_v(v, fit: GaussFitState, hyper: GPriorHyper):
    """Unnormalized log posterior density of ``v = 1/(1+g)`` on ``(0, 1/nu)``."""
    v = np.asarray(v, dtype=float)
    a, b, r, s, nu, kappa = hyper.a, hyper.b, hyper.r, hyper.s, hyper.nu, hyper.kappa
    w = nu * v
    R2 = fit.r2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            ((a + fit.J) / 2 - 1) * np.log(v)
            + (b / 2 - 1) * np.log1p(-w)
            - r * np.log(kappa + (1 - kappa) * w)
            - 0.5 * s * v
            - 0.5 * (fit.n - 1) * np.log((1 - R2) + R2 * v)
        )
    return np.where((v > 0) & (w < 1), out, -np.inf)


def sample_gauss_conditionals(fit: GaussFitState, g: float, rng):
    """Draw ``(phi, alpha, beta)`` given ``g``."""
    if not g > 0:
        raise ValueError("g must be positive")
    n = fit.n
    rate = fit.sse_null * (1 + g * (1 - fit.r2)) / (2 * (1 + g))
    phi = rng.gamma((n - 1) / 2, 1.0 / rate)
    alpha = fit.y_bar + rng.standard_normal() / math.sqrt(n * phi)
    if fit.J == 0:
        return phi, alpha, np.zeros(0)
    shrink = g / (1 + g)
    z = rng.standard_normal(fit.J)
    dev = linalg.solve_triangular(fit.btb_chol, z, lower=True, trans="T")
    beta = shrink * fit.beta_hat + math.sqrt(shrink / phi) * dev
    return phi, alpha, beta


GRID_NODES = 512


def _griddy_nodes(logf, lo=-45.0, hi=45.0):
    """Nodes in logit space covering the region within 40 log-units of the peak."""
    t = np.linspace(lo, hi, 901)
    lf = logf(t)
    top = np.max(lf)
    if not np.isfinite(top):
        raise ValueError("posterior density of g vanished on the grid")
    keep = np.flatnonzero(lf > top - 40.0)
    i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, t.size - 1)
    peak = np.flatnonzero(lf > top - 6.0)
    p0, p1 = t[max(peak[0] - 1, 0)], t[min(peak[-1] + 1, t.size - 1)]
    nodes = np.unique(np.concatenate([
        np.linspace(t[i0], t[i1], GRID_NODES - 128),
        np.linspace(p0, p1, 128),
    ]))
    return nodes


def _griddy_draw(nodes, logf, rng, size):
    lf = logf(nodes)
    f = np.exp(lf - np.max(lf))
    h = np.diff(nodes)
    seg = 0.5 * h * (f[:-1] + f[1:])
    cdf = np.concatenate([[0.0], np.cumsum(seg)])
    u = rng.random(size) * cdf[-1]
    k = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, h.size - 1)
    rem = u - cdf[k]
    f0, f1, hk = f[k], f[k + 1], h[k]
    slope = (f1 - f0) / hk
    # solve f0 x + slope x^2 / 2 = rem for x in [0, hk]
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(f0 * f0 + 2 * slope * rem, 0.0))
        x = np.where(np.abs(slope) * hk > 1e-12 * np.maximum(f0, 1e-300),
                     2 * rem / (f0 + disc), rem / f0)
    x = np.clip(np.nan_to_num(x, nan=0.0), 0.0, hk)
    return nodes[k] + x


def sample_gauss_g(fit: GaussFitState, prior: GPriorFamily, rng, size=None,
                   hyper: GPriorHyper | PointMass | None = None):
    """Draw ``g`` from its Gaussian-model conditional posterior.

    The beta-prime prior uses an exact beta transformation; every other prior
    uses an inverse-CDF sampler on a 512-node grid in ``logit(nu v)``, with
    the density interpolated linearly between nodes.
    """
    m = 1 if size is None else int(np.prod(size))
    if hyper is None:
        hyper = prior.resolve(fit.n, fit.J)
    if isinstance(hyper, PointMass):
        g = np.full(m, hyper.g)
    elif prior.kind is PriorKind.BETA_PRIME and hyper == prior.resolve(fit.n, fit.J):
        A = fit.J / 2 + 0.25
        bp = hyper.b / 2
        t = rng.beta(bp, A, m)
        R2 = fit.r2
        w = t / ((1 - R2) + R2 * t)  # w = 1 - v = g/(1+g)
        w = np.clip(w, np.finfo(float).tiny, np.nextafter(1.0, 0.0))
        g = w / (1 - w)
    else:
        nu = hyper.nu

        def logf(t):
            w = expit(t)
            with np.errstate(divide="ignore"):
                jac = np.log(w) + np.log1p(-w)
            return log_g_posterior_v(w / nu, fit, hyper) + jac

        nodes = _griddy_nodes(logf)
        t = _griddy_draw(nodes, logf, rng, m)
        w = expit(t)
        v = np.clip(w / nu, np.finfo(float).tiny, np.nextafter(1.0 / nu, 0.0))
        g = 1.0 / v - 1.0
        g = np.maximum(g, np.finfo(float).tiny)
    if size is None:
        return float(g[0])
    return g.reshape(size)
