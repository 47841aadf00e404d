"""Canonical-link exponential-family GLMs: likelihood, MLE and Wald summaries.

Supported families are Bernoulli with logit link, Poisson with log link and
Gaussian with identity link and known dispersion.  With a canonical link the
observed and expected information coincide and ``J_n = diag(b''(eta)) / phi``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, gammaln

from .splines import BasisMatrix

__all__ = [
    "FamilyKind",
    "Family",
    "FitState",
    "FitError",
    "RankDeficientError",
    "SeparationError",
    "ConvergenceError",
    "log_likelihood",
    "score_eta",
    "fit_mle",
    "weighted_center",
    "pseudo_r2",
]

MAX_ITER = 100
MAX_HALVINGS = 30
SCORE_TOL = 1e-8
LOGLIK_RTOL = 1e-12
PIVOT_TOL = 1e-10
SEPARATION_TOL = 1e-10


class FitError(RuntimeError):
    """Base class for model-fitting failures; the model is treated as rejected."""


class RankDeficientError(FitError):
    """The design ``[1 | B]`` is numerically rank deficient."""


class SeparationError(FitError):
    """The likelihood has no finite maximizer (complete or quasi separation)."""


class ConvergenceError(FitError):
    """Newton iterations did not converge."""


class FamilyKind(enum.Enum):
    BERNOULLI = "bernoulli"
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class Family:
    """Exponential family with canonical link and dispersion ``phi``."""

    kind: FamilyKind
    phi: float = 1.0

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("dispersion must be positive")
        if self.kind is not FamilyKind.GAUSSIAN and self.phi != 1.0:
            raise ValueError("Bernoulli and Poisson families have dispersion fixed at 1")

    @classmethod
    def from_name(cls, name: str, phi: float = 1.0) -> "Family":
        key = name.strip().lower()
        aliases = {"binomial": "bernoulli", "logistic": "bernoulli", "normal": "gaussian"}
        try:
            kind = FamilyKind(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown family {name!r}; expected bernoulli, poisson or gaussian") from None
        return cls(kind, phi)

    def b(self, theta):
        if self.kind is FamilyKind.BERNOULLI:
            # log(1 + e^theta) without overflow
            return np.maximum(theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))
        if self.kind is FamilyKind.POISSON:
            return np.exp(theta)
        return 0.5 * theta * theta

    def mean(self, theta):
        """``b'(theta)``."""
        if self.kind is FamilyKind.BERNOULLI:
            return expit(theta)
        if self.kind is FamilyKind.POISSON:
            return np.exp(theta)
        return np.asarray(theta, dtype=float)

    def variance(self, theta):
        """``b''(theta)``."""
        if self.kind is FamilyKind.BERNOULLI:
            m = expit(theta)
            return m * (1.0 - m)
        if self.kind is FamilyKind.POISSON:
            return np.exp(theta)
        return np.ones_like(np.asarray(theta, dtype=float))

    def mean_variance(self, theta):
        """``(b'(theta), b''(theta))`` evaluated together."""
        if self.kind is FamilyKind.BERNOULLI:
            m = expit(theta)
            return m, m * (1.0 - m)
        if self.kind is FamilyKind.POISSON:
            with np.errstate(over="ignore"):
                m = np.exp(theta)
            return m, m
        theta = np.asarray(theta, dtype=float)
        return theta, np.ones_like(theta)

    def c(self, y):
        if self.kind is FamilyKind.BERNOULLI:
            return np.zeros_like(y)
        if self.kind is FamilyKind.POISSON:
            return -gammaln(y + 1.0)
        return -0.5 * y * y / self.phi - 0.5 * math.log(2.0 * math.pi * self.phi)

    def check_response(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise ValueError("response must be one-dimensional")
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        if self.kind is FamilyKind.BERNOULLI and not np.all((y == 0) | (y == 1)):
            raise ValueError("Bernoulli response must be 0/1")
        if self.kind is FamilyKind.POISSON and not np.all((y >= 0) & (y == np.floor(y))):
            raise ValueError("Poisson response must be non-negative integers")
        return y

    def initial_eta(self, y):
        if self.kind is FamilyKind.BERNOULLI:
            m = (y + 0.5) / 2.0
            return np.log(m / (1.0 - m))
        if self.kind is FamilyKind.POISSON:
            return np.log(y + 0.1)
        return y.copy()


def log_likelihood(y, eta, fam: Family) -> float:
    """``sum_i [y_i eta_i - b(eta_i)] / phi + c(y_i, phi)``."""
    y = fam.check_response(y)
    eta = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(eta)):
        raise ValueError("linear predictor must be finite")
    return float(np.sum((y * eta - fam.b(eta)) / fam.phi + fam.c(y)))


def score_eta(y, eta, fam: Family) -> np.ndarray:
    """Gradient of the log-likelihood with respect to ``eta``."""
    return (np.asarray(y, dtype=float) - fam.mean(eta)) / fam.phi


def weighted_center(B, info_diag) -> np.ndarray:
    """``[I - tr(J)^-1 1 1^T J] B`` with ``J = diag(info_diag)``."""
    B = np.asarray(B, dtype=float)
    w = np.asarray(info_diag, dtype=float)
    if B.shape[0] != w.size:
        raise ValueError("basis rows and information diagonal differ in length")
    return B - (w @ B) / w.sum()


def pseudo_r2(q: float, n: int) -> float:
    """``1 - exp(-q/n)``."""
    if q < 0:
        raise ValueError("Wald statistic must be non-negative")
    return -math.expm1(-q / n)


@dataclass(frozen=True, eq=False)
class FitState:
    """Maximum-likelihood summary of one model.

    ``btjb_chol`` is the lower Cholesky factor of ``B~^T J_n B~`` and
    ``alpha_shift`` the row vector ``tr(J_n)^-1 1^T J_n B``; together they
    give the conditional posteriors of the coefficients.
    """

    alpha_hat: float
    beta_hat: np.ndarray
    eta_hat: np.ndarray
    info_diag: np.ndarray
    info_trace: float
    q_wald: float
    loglik_at_mle: float
    pseudo_r2: float
    btjb_chol: np.ndarray
    alpha_shift: np.ndarray
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.eta_hat.size

    @property
    def J(self) -> int:
        return self.beta_hat.size


def _as_matrix(B, n=None) -> np.ndarray:
    if isinstance(B, BasisMatrix):
        return B.values
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1) if B.size else B.reshape(n or 0, 0)
    return B


def _checked_cholesky(H):
    d = np.sqrt(np.diag(H))
    if not np.all(np.isfinite(d)) or np.any(d <= 0):
        raise RankDeficientError("information matrix has a non-positive diagonal")
    Hs = H / np.outer(d, d)
    try:
        Ls = linalg.cholesky(Hs, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise RankDeficientError("design is rank deficient (Cholesky failed)") from None
    if np.min(np.diag(Ls)) ** 2 < PIVOT_TOL:
        raise RankDeficientError("design is rank deficient (pivot below tolerance)")
    return Ls, d


def _solve(Ls, d, rhs):
    return linalg.cho_solve((Ls, True), rhs / d, check_finite=False) / d


def fit_mle(B, y, fam: Family, start_eta=None) -> FitState:
    """Maximum-likelihood fit of ``eta = alpha 1 + B beta`` by Newton's method.

    Parameters
    ----------
    B : BasisMatrix or ndarray, shape (n, J)
        Spline basis; ``J = 0`` gives the intercept-only model.
    y : ndarray, shape (n,)
    fam : Family
    start_eta : ndarray, optional
        Linear predictor to start from, typically the fit of a neighbouring
        model.  The first iteration is a weighted least-squares projection
        of the working response onto the current design.

    Raises
    ------
    RankDeficientError, SeparationError, ConvergenceError
    """
    y = fam.check_response(y)
    n = y.size
    Bm = _as_matrix(B, n)
    if Bm.shape[0] != n:
        raise ValueError("basis and response differ in length")
    X = np.column_stack([np.ones(n), Bm])
    eta = fam.initial_eta(y) if start_eta is None else np.asarray(start_eta, dtype=float).copy()
    phi = fam.phi
    c_sum = float(np.sum(fam.c(y)))

    # first step: weighted projection of the working response
    mu, w = fam.mean_variance(eta)
    z = eta + (y - mu) / np.maximum(w, 1e-300)
    Ls, d = _checked_cholesky(X.T @ (X * w[:, None]))
    theta = _solve(Ls, d, X.T @ (w * z))
    eta = X @ theta
    ll = _loglik(y, eta, fam)
    if not np.isfinite(ll):
        theta = np.zeros(X.shape[1])
        theta[0] = _null_intercept(y, fam)
        eta = X @ theta
        ll = _loglik(y, eta, fam)

    converged = False
    it = 0
    mu, w = fam.mean_variance(eta)
    for it in range(1, MAX_ITER + 1):
        score = X.T @ (y - mu)
        if phi != 1.0:
            score /= phi
        if np.max(np.abs(score)) < SCORE_TOL:
            converged = True
            break
        if not w.min() >= SEPARATION_TOL:
            raise SeparationError("fitted probabilities/means at the boundary; MLE does not exist")
        Ls, d = _checked_cholesky(X.T @ (X * (w / phi)[:, None]))
        step = _solve(Ls, d, score)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            new_theta = theta + t * step
            new_eta = X @ new_theta
            new_ll = _loglik(y, new_eta, fam)
            if new_ll >= ll:
                break
            t *= 0.5
        else:
            # no ascent possible: already at numerical optimum
            converged = True
            break
        rel = abs(new_ll - ll) / max(abs(ll + c_sum), 1.0)
        theta, eta, ll = new_theta, new_eta, new_ll
        mu, w = fam.mean_variance(eta)
        if rel < LOGLIK_RTOL:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"Newton did not converge in {MAX_ITER} iterations")

    w = w / phi
    if not w.min() >= SEPARATION_TOL or not np.all(np.isfinite(eta)):
        raise SeparationError("fitted probabilities/means at the boundary; MLE does not exist")
    # rank check at the optimum; the trailing block of the Cholesky factor
    # of [1|B]^T J [1|B] is the factor of the weighted-centered Gram matrix
    Ls, d = _checked_cholesky(X.T @ (X * w[:, None]))
    chol = (Ls * d[:, None])[1:, 1:]
    return _summarize(theta, eta, w, Bm, ll + c_sum, n, it, chol)


def _null_intercept(y, fam):
    m = y.mean()
    if fam.kind is FamilyKind.BERNOULLI:
        m = min(max(m, 1e-6), 1 - 1e-6)
        return math.log(m / (1 - m))
    if fam.kind is FamilyKind.POISSON:
        return math.log(max(m, 1e-6))
    return m


def _loglik(y, eta, fam):
    """Log-likelihood without the ``c(y, phi)`` term; NaN maps to -inf."""
    with np.errstate(over="ignore", invalid="ignore"):
        v = float((y @ eta - np.sum(fam.b(eta))) / fam.phi)
    return v if v == v else -math.inf


def _summarize(theta, eta, w, Bm, ll, n, it, chol) -> FitState:
    tr = float(w.sum())
    beta = theta[1:].copy()
    J = beta.size
    if J:
        alpha_shift = (w @ Bm) / tr
        f = Bm @ beta
        fc = f - (w @ f) / tr
        q = float(np.sum(w * fc * fc))
    else:
        alpha_shift = np.zeros(0)
        q = 0.0
        chol = np.zeros((0, 0))
    return FitState(
        alpha_hat=float(theta[0]),
        beta_hat=beta,
        eta_hat=eta,
        info_diag=w,
        info_trace=tr,
        q_wald=q,
        loglik_at_mle=ll,
        pseudo_r2=pseudo_r2(q, n),
        btjb_chol=chol,
        alpha_shift=alpha_shift,
        iterations=it,
    )
