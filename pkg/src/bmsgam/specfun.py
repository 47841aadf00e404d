"""Log-domain hypergeometric-type functions via adaptive Gauss-Kronrod.

All functions here reduce to one Euler-type integral

    I = int_0^1 u^p (1-u)^q prod_k (1 - y_k u)^(-beta_k) exp(x u) du

which can overflow double precision long before the parameters look large
(``x`` of a few thousand is routine in marginal likelihoods).  The integral
is evaluated as ``M + log(sum)`` where ``M`` is the peak of the log
integrand, so only ratios of order one are ever exponentiated.

Integration strategy:

* a coarse grid (uniform plus geometric toward both endpoints) locates the
  mode(s) and the region carrying non-negligible mass;
* the region is split at the mode(s); a piece touching 0 with ``p < 0`` is
  mapped by ``u = c t**(1/(p+1))`` which removes the algebraic singularity
  exactly, and symmetrically at 1 with ``w = 1 - u``;
* each piece is integrated by vectorized adaptive G10/K21 bisection.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as L
from scipy.special import betaln

__all__ = [
    "QuadratureError",
    "gauss_kronrod",
    "log_beta_integral",
    "log_phi1",
    "log_hyp1f1",
    "log_hyp2f1",
    "log_appell_f1",
]

DEFAULT_RTOL = 1e-12
MAX_PANELS = 4000


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


@lru_cache(maxsize=None)
def gauss_kronrod(n: int = 10):
    """Nodes and weights of the (2n+1)-point Kronrod extension on [-1, 1].

    Returns ``(x, wk, wg)`` where ``x`` holds the 2n+1 Kronrod nodes,
    ``wk`` their Kronrod weights and ``wg`` the n-point Gauss weights
    aligned with ``x`` (zero on the Kronrod-only nodes).
    """
    xg, wg = L.leggauss(n)
    # Stieltjes polynomial E_{n+1} = sum c_i P_i, orthogonal to P_n * P_k for k <= n
    xq, wq = L.leggauss(3 * n + 3)
    P = L.legvander(xq, n + 1)  # P[:, i] = P_i(xq)
    Pn = P[:, n]
    M = np.einsum("q,qi,qk->ki", wq * Pn, P[:, : n + 2], P[:, : n + 1])
    coef, *_ = np.linalg.lstsq(M[:, : n + 1], -M[:, n + 1], rcond=None)
    c = np.append(coef, 1.0)
    xs = np.sort(np.real(L.legroots(c)))
    x = np.sort(np.concatenate([xg, xs]))
    V = L.legvander(x, 2 * n).T
    rhs = np.zeros(2 * n + 1)
    rhs[0] = 2.0
    wk = np.linalg.solve(V, rhs)
    wg_full = np.zeros_like(x)
    for xi, wi in zip(xg, wg):
        wg_full[np.argmin(np.abs(x - xi))] = wi
    return x, wk, wg_full


class _Kernel:
    """log u^p (1-u)^q prod (1-y_k u)^(-beta_k) e^(x u), evaluated from (u, w=1-u)."""

    def __init__(self, p, q, factors, x):
        self.p = float(p)
        self.q = float(q)
        self.x = float(x)
        self.factors = [(float(b), float(y)) for b, y in factors if b != 0.0 and y != 0.0]

    def rest(self, u, w):
        out = self.x * u
        for beta, y in self.factors:
            if y > 0.0:
                arg = (1.0 - y) + y * w
            else:
                arg = 1.0 - y * u
            out = out - beta * np.log(arg)
        return out

    def full(self, u, w):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.rest(u, w)
            if self.p != 0.0:
                out = out + self.p * np.log(u)
            if self.q != 0.0:
                out = out + self.q * np.log(w)
        return out


class _Piece:
    """One integration piece in its own variable ``t`` on [0, span]."""

    def __init__(self, kern: _Kernel, start: float, end: float, left_anchor: bool, right_anchor: bool):
        self.kern = kern
        self.start = start
        self.end = end
        self.mode = "linear"
        if left_anchor and not right_anchor:
            self.mode = "left-power" if kern.p < 0 else "left"
        elif right_anchor and not left_anchor:
            self.mode = "right-power" if kern.q < 0 else "right"
        if self.mode in ("left-power", "right-power"):
            self.span = 1.0
        elif self.mode == "right":
            self.span = 1.0 - start
        else:
            self.span = end - start

    def logf(self, t):
        k = self.kern
        if self.mode == "left-power":
            a = k.p + 1.0
            u = self.end * t ** (1.0 / a)
            with np.errstate(divide="ignore"):
                out = k.rest(u, 1.0 - u) + k.q * np.log1p(-u) + a * math.log(self.end) - math.log(a)
            return out
        if self.mode == "right-power":
            b = k.q + 1.0
            c = 1.0 - self.start
            w = c * t ** (1.0 / b)
            u = 1.0 - w
            with np.errstate(divide="ignore"):
                out = k.rest(u, w) + k.p * np.log(u) + b * math.log(c) - math.log(b)
            return out
        if self.mode == "right":
            w = t
            return k.full(1.0 - w, w)
        u = self.start + t
        return k.full(u, 1.0 - u)


def _analysis_grid():
    geo = np.logspace(-15, -1.5, 56)
    uni = np.linspace(0.0, 1.0, 1001)[1:-1]
    u = np.concatenate([geo, uni, 1.0 - geo[::-1]])
    w = np.concatenate([1.0 - geo, 1.0 - uni, geo[::-1]])
    order = np.argsort(u, kind="stable")
    return u[order], w[order]


_GRID_U, _GRID_W = _analysis_grid()
_EXT = np.concatenate([[0.0], _GRID_U, [1.0]])
_GRID_LOG_CELL = np.log(0.5 * (_EXT[2:] - _EXT[:-2]))


def _pieces(kern: _Kernel):
    u, w = _GRID_U, _GRID_W
    lk = kern.full(u, w)
    lk = np.where(np.isnan(lk), -np.inf, lk)
    if not np.isfinite(np.max(lk)):
        raise QuadratureError("log integrand is not finite anywhere on (0, 1)")
    # judge each node by the mass of its cell, not its height, so an
    # integrable endpoint spike cannot hide the bulk
    mass = lk + _GRID_LOG_CELL
    top = np.max(mass)
    keep = np.flatnonzero(mass > top - 46.0)
    i0, i1 = keep[0], keep[-1]
    lo = 0.0 if i0 == 0 else float(u[i0 - 1])
    hi = 1.0 if i1 == u.size - 1 else float(u[i1 + 1])
    inner = (lk[1:-1] >= lk[:-2]) & (lk[1:-1] >= lk[2:]) & (mass[1:-1] > top - 30.0)
    cuts = sorted({float(v) for v in u[1:-1][inner] if lo < v < hi})
    if lo == 0.0 and hi == 1.0 and not cuts:
        cuts = [0.5]
    edges = [lo] + cuts + [hi]
    pieces = []
    for s, e in zip(edges[:-1], edges[1:]):
        if e > s:
            pieces.append(_Piece(kern, s, e, s == 0.0, e == 1.0))
    return pieces


def _adaptive(pieces, rtol: float, initial: int = 4):
    x, wk, wg = gauss_kronrod(10)
    a_list, b_list, pid = [], [], []
    for i, pc in enumerate(pieces):
        edges = np.linspace(0.0, pc.span, initial + 1)
        a_list.append(edges[:-1])
        b_list.append(edges[1:])
        pid.append(np.full(initial, i))
    A = np.concatenate(a_list)
    B = np.concatenate(b_list)
    P = np.concatenate(pid)
    scale = None
    done_sum = 0.0
    done_err = 0.0
    for _ in range(64):
        half = 0.5 * (B - A)
        mid = 0.5 * (A + B)
        nodes = mid[:, None] + half[:, None] * x[None, :]
        logf = np.empty_like(nodes)
        for i, pc in enumerate(pieces):
            sel = P == i
            if np.any(sel):
                logf[sel] = pc.logf(nodes[sel])
        logf = np.where(np.isnan(logf), -np.inf, logf)
        top = np.max(logf)
        if scale is None:
            if not np.isfinite(top):
                raise QuadratureError("integrand vanished on every Kronrod node")
            scale = top
        elif top > scale + 300.0:
            factor = math.exp(scale - top)
            done_sum *= factor
            done_err *= factor
            scale = top
        f = np.exp(logf - scale)
        K = half * (f @ wk)
        G = half * (f @ wg)
        err = np.abs(K - G)
        total = done_sum + K.sum()
        tol = rtol * abs(total)
        if done_err + err.sum() <= tol or total == 0.0:
            return scale, total
        # keep panels whose error is already negligible, bisect the rest
        thresh = max(tol - done_err, 0.0) / max(err.size, 1)
        fine = err <= thresh
        done_sum += K[fine].sum()
        done_err += err[fine].sum()
        A, B, P, mid = A[~fine], B[~fine], P[~fine], mid[~fine]
        if 2 * A.size > MAX_PANELS:
            raise QuadratureError(
                f"adaptive quadrature exceeded {MAX_PANELS} panels (estimated error "
                f"{(done_err + err.sum()) / abs(total):.3g} relative)"
            )
        A, B, P = np.concatenate([A, mid]), np.concatenate([mid, B]), np.concatenate([P, P])
    raise QuadratureError("adaptive quadrature did not converge")


def log_beta_integral(p: float, q: float, factors=(), x: float = 0.0, rtol: float = DEFAULT_RTOL) -> float:
    """log of int_0^1 u^p (1-u)^q prod_k (1-y_k u)^(-beta_k) exp(x u) du.

    ``factors`` is a sequence of ``(beta_k, y_k)`` pairs with ``y_k < 1``.
    Requires ``p > -1`` and ``q > -1``.
    """
    if not (p > -1.0 and q > -1.0):
        raise ValueError(f"endpoint exponents must exceed -1, got p={p!r}, q={q!r}")
    for beta, y in factors:
        if not y < 1.0:
            raise ValueError(f"factor argument y={y!r} must be < 1")
        if not (math.isfinite(beta) and math.isfinite(y)):
            raise ValueError("factor parameters must be finite")
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    kern = _Kernel(p, q, factors, x)
    scale, total = _adaptive(_pieces(kern), rtol)
    if not total > 0.0:
        raise QuadratureError("integral evaluated to zero")
    return scale + math.log(total)


def log_phi1(alpha, beta, gamma, x, y, rtol: float = DEFAULT_RTOL) -> float:
    """log of the confluent hypergeometric function of two variables.

    Phi_1(alpha, beta, gamma, x, y) = B(alpha, gamma-alpha)^-1
        int_0^1 u^(alpha-1) (1-u)^(gamma-alpha-1) (1-y u)^(-beta) e^(x u) du

    Parameters
    ----------
    alpha, gamma : float
        ``gamma > alpha > 0``.
    beta : float
        ``beta >= 0``; ``beta = 0`` gives ``1F1(alpha; gamma; x)``.
    x : float
        Any finite real.
    y : float
        ``y < 1``.
    """
    if not (gamma > alpha > 0):
        raise ValueError(f"Phi1 requires gamma > alpha > 0, got alpha={alpha!r}, gamma={gamma!r}")
    if beta < 0:
        raise ValueError(f"Phi1 requires beta >= 0, got {beta!r}")
    if not y < 1:
        raise ValueError(f"Phi1 requires y < 1, got {y!r}")
    if x == 0.0 and (y == 0.0 or beta == 0.0):
        return 0.0
    li = log_beta_integral(alpha - 1.0, gamma - alpha - 1.0, [(beta, y)], x, rtol)
    return li - float(betaln(alpha, gamma - alpha))


def log_hyp1f1(a, c, x, rtol: float = DEFAULT_RTOL) -> float:
    """log 1F1(a; c; x) for ``c > a > 0``."""
    return log_phi1(a, 0.0, c, x, 0.0, rtol)


def log_hyp2f1(b, a, c, y, rtol: float = DEFAULT_RTOL) -> float:
    """log 2F1(b, a; c; y) through its Euler integral, ``c > a > 0``, ``y < 1``.

    The integral form stays accurate as ``y`` approaches 1, where the power
    series converges too slowly to be useful.
    """
    return log_phi1(a, b, c, 0.0, y, rtol)


def log_appell_f1(a, b1, b2, c, x, y, rtol: float = DEFAULT_RTOL) -> float:
    """log of the Appell function F1(a; b1, b2; c; x, y) for ``c > a > 0``, ``x, y < 1``."""
    if not (c > a > 0):
        raise ValueError(f"F1 requires c > a > 0, got a={a!r}, c={c!r}")
    if not (x < 1 and y < 1):
        raise ValueError("F1 integral representation requires x < 1 and y < 1")
    factors = [(b1, x), (b2, y)]
    if all(b == 0.0 or z == 0.0 for b, z in factors):
        return 0.0
    li = log_beta_integral(a - 1.0, c - a - 1.0, factors, 0.0, rtol)
    return li - float(betaln(a, c - a))
