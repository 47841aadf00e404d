"""The truncated compound confluent hypergeometric (tCCH) family.

A variable ``V`` on ``(0, 1/nu)`` is tCCH(a, b, z, s, nu, kappa) when

    f(v) ∝ v^(a-1) (1 - nu v)^(b-1) [kappa + (1 - kappa) nu v]^(-z) e^(-s v).

With ``V = 1/(1+g)`` this family contains the common mixtures of g-priors
and is conjugate for the Laplace-approximated GLM likelihood: the posterior
of ``V`` given a model is again tCCH.  This module holds the parameter
types, the prior table, log density, moments, and two samplers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .specfun import log_phi1

__all__ = [
    "TcchParams",
    "GPriorHyper",
    "PointMass",
    "PriorKind",
    "GPriorFamily",
    "ImproperPriorError",
    "tcch_log_pdf",
    "tcch_log_normalizer",
    "tcch_moment",
    "tcch_log_moment",
    "tcch_sample_exact",
    "SliceState",
    "tcch_sample_slice",
]


@dataclass(frozen=True)
class TcchParams:
    """Parameters of the tCCH distribution; ``z`` is the compound exponent."""

    a: float
    b: float
    z: float
    s: float
    nu: float
    kappa: float

    def __post_init__(self):
        for name in ("a", "b", "z", "s", "nu", "kappa"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"tCCH parameter {name} must be finite")
            object.__setattr__(self, name, v)
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"tCCH requires a > 0 and b > 0, got a={self.a}, b={self.b}")
        if not self.nu >= 1:
            raise ValueError(f"tCCH requires nu >= 1, got {self.nu}")
        if not self.kappa > 0:
            raise ValueError(f"tCCH requires kappa > 0, got {self.kappa}")

    @property
    def upper(self) -> float:
        """Right end of the support, ``1/nu``."""
        return 1.0 / self.nu

    def _phi1_args(self, extra_gamma: float = 0.0):
        return (self.b, self.z, self.a + self.b + extra_gamma, self.s / self.nu, 1.0 - self.kappa)


class ImproperPriorError(ValueError):
    """The prior is improper for the requested model size."""


@dataclass(frozen=True)
class GPriorHyper:
    """Hyperparameters (a, b, r, s, nu, kappa) of a tCCH mixture of g-priors.

    The prior is ``1/(1+g) ~ tCCH(a/2, b/2, r, s/2, nu, kappa)``.
    """

    a: float
    b: float
    r: float
    s: float
    nu: float
    kappa: float

    def prior(self) -> TcchParams:
        return TcchParams(self.a / 2, self.b / 2, self.r, self.s / 2, self.nu, self.kappa)

    def posterior(self, J: int, Q: float) -> TcchParams:
        """Conditional law of ``1/(1+g)`` given a model with ``J`` columns and Wald statistic ``Q``."""
        return TcchParams((self.a + J) / 2, self.b / 2, self.r, (self.s + Q) / 2, self.nu, self.kappa)


@dataclass(frozen=True)
class PointMass:
    """Degenerate prior ``g = value``."""

    g: float


class PriorKind(enum.Enum):
    UNIT_INFORMATION = "unit-information"
    UNIFORM = "uniform"
    HYPER_G = "hyper-g"
    HYPER_G_N = "hyper-g/n"
    BETA_PRIME = "beta-prime"
    ZS_ADAPTED = "zs-adapted"
    ROBUST = "robust"
    INTRINSIC = "intrinsic"
    CUSTOM = "custom"


_ALIASES = {
    "unit": PriorKind.UNIT_INFORMATION,
    "unitinfo": PriorKind.UNIT_INFORMATION,
    "hyperg": PriorKind.HYPER_G,
    "hyper-g-n": PriorKind.HYPER_G_N,
    "hypergn": PriorKind.HYPER_G_N,
    "hyper-g-over-n": PriorKind.HYPER_G_N,
    "betaprime": PriorKind.BETA_PRIME,
    "zs": PriorKind.ZS_ADAPTED,
    "zsadapted": PriorKind.ZS_ADAPTED,
}


@dataclass(frozen=True)
class GPriorFamily:
    """A named mixture of g-priors, resolved per sample size and model size.

    Parameters
    ----------
    kind : PriorKind
    custom : GPriorHyper, optional
        Fixed hyperparameters for ``PriorKind.CUSTOM``.
    """

    kind: PriorKind
    custom: GPriorHyper | None = None

    def __post_init__(self):
        if self.kind is PriorKind.CUSTOM and self.custom is None:
            raise ValueError("a custom prior needs explicit hyperparameters")

    @classmethod
    def from_name(cls, name: str) -> "GPriorFamily":
        key = name.strip().lower().replace("_", "-")
        try:
            kind = PriorKind(key)
        except ValueError:
            kind = _ALIASES.get(key.replace("-", ""), _ALIASES.get(key))
            if kind is None or kind is PriorKind.CUSTOM:
                valid = ", ".join(k.value for k in PriorKind if k is not PriorKind.CUSTOM)
                raise ValueError(f"unknown prior {name!r}; expected one of {valid}") from None
        return cls(kind)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def depends_on_model_size(self) -> bool:
        return self.kind in (PriorKind.BETA_PRIME, PriorKind.ROBUST, PriorKind.INTRINSIC)

    def resolve(self, n: int, J: int) -> GPriorHyper | PointMass:
        """Hyperparameters for sample size ``n`` and ``J`` spline columns."""
        k = self.kind
        if k is PriorKind.UNIT_INFORMATION:
            return PointMass(float(n))
        if k is PriorKind.UNIFORM:
            return GPriorHyper(2, 2, 0, 0, 1, 1)
        if k is PriorKind.HYPER_G:
            return GPriorHyper(1, 2, 0, 0, 1, 1)
        if k is PriorKind.HYPER_G_N:
            return GPriorHyper(1, 2, 1.5, 0, 1, 1.0 / n)
        if k is PriorKind.BETA_PRIME:
            if not J < n - 1:
                raise ImproperPriorError(f"beta-prime prior is improper unless J < n - 1 (J={J}, n={n})")
            return GPriorHyper(0.5, n - J - 1.5, 0, 0, 1, 1)
        if k is PriorKind.ZS_ADAPTED:
            return GPriorHyper(1, 2, 0, n + 3, 1, 1)
        if k is PriorKind.ROBUST:
            return GPriorHyper(1, 2, 1.5, 0, (n + 1) / (J + 1), 1)
        if k is PriorKind.INTRINSIC:
            return GPriorHyper(1, 1, 1, 0, (n + J + 1) / (J + 1), (n + J + 1) / n)
        return self.custom


# ---------------------------------------------------------------------------
# density and moments


def tcch_log_normalizer(p: TcchParams) -> float:
    """log of int_0^{1/nu} v^(a-1)(1-nu v)^(b-1)[kappa+(1-kappa)nu v]^(-z) e^(-s v) dv."""
    return (
        log_phi1(*p._phi1_args())
        + float(sc.betaln(p.a, p.b))
        - p.a * math.log(p.nu)
        - p.s / p.nu
    )


def tcch_log_pdf(v, p: TcchParams, log_norm: float | None = None):
    """Log density; ``-inf`` outside ``(0, 1/nu)``.

    ``log_norm`` may be passed to skip recomputing the normalizer.
    """
    v = np.asarray(v, dtype=float)
    if log_norm is None:
        log_norm = tcch_log_normalizer(p)
    w = p.nu * v
    inside = (v > 0) & (w < 1)
    ws = np.where(inside, w, 0.5)
    vs = ws / p.nu
    out = (
        (p.a - 1) * np.log(vs)
        + (p.b - 1) * np.log1p(-ws)
        - p.z * np.log(p.kappa + (1 - p.kappa) * ws)
        - p.s * vs
        - log_norm
    )
    out = np.where(inside, out, -np.inf)
    return out[()] if out.ndim == 0 else out


def tcch_log_moment(k: float, p: TcchParams) -> float:
    """log E[V^k]; ``k`` may be any real with ``a + k > 0``."""
    if k == 0:
        return 0.0
    if not p.a + k > 0:
        raise ValueError("moment order must satisfy a + k > 0")
    return (
        -k * math.log(p.nu)
        + float(sc.betaln(p.a + k, p.b) - sc.betaln(p.a, p.b))
        + log_phi1(*p._phi1_args(k))
        - log_phi1(*p._phi1_args())
    )


def tcch_moment(k: float, p: TcchParams) -> float:
    """E[V^k] of the tCCH distribution."""
    return math.exp(tcch_log_moment(k, p))


# ---------------------------------------------------------------------------
# exact sampler for b = 1, kappa = 1


def _open_uniform(rng, size):
    # (0, 1]
    return 1.0 - rng.random(size)


def _power_exp_sample(a: float, lam: float, rng, size: int) -> np.ndarray:
    """Draws on (0, 1) with density ∝ w^(a-1) e^(-lam w)."""
    out = np.empty(size)
    if lam == 0.0:
        out[:] = _open_uniform(rng, size) ** (1.0 / a)
    elif lam > 0.0:
        log_pmax = math.log(sc.gammainc(a, lam)) if sc.gammainc(a, lam) > 0 else -np.inf
        if log_pmax > -690.0:
            pmax = math.exp(log_pmax)
            g = sc.gammaincinv(a, _open_uniform(rng, size) * pmax)
            out[:] = g / lam
        else:
            # a >> lam: nearly a power law, accept with e^(-lam w)
            _rejection_fill(out, rng, lambda m: _open_uniform(rng, m) ** (1.0 / a),
                            lambda w: -lam * w)
    else:
        c = -lam
        if c <= a + 1.0:
            _rejection_fill(out, rng, lambda m: _open_uniform(rng, m) ** (1.0 / a),
                            lambda w: c * (w - 1.0))
        else:
            _split_envelope(out, a, c, rng)
    np.clip(out, np.finfo(float).tiny, np.nextafter(1.0, 0.0), out=out)
    return out


def _rejection_fill(out, rng, propose, log_accept):
    todo = np.arange(out.size)
    while todo.size:
        w = propose(todo.size)
        ok = np.log(_open_uniform(rng, todo.size)) <= log_accept(w)
        out[todo[ok]] = w[ok]
        todo = todo[~ok]


def _split_envelope(out, a: float, c: float, rng):
    """density ∝ w^(a-1) e^(c w) with c > a + 1: power law on (0, 1/2], tilt on (1/2, 1)."""
    log_m_lo = c / 2 - a * math.log(2.0) - math.log(a)
    top = max(0.0, (1.0 - a) * math.log(2.0))
    log_m_hi = top + c + math.log(-math.expm1(-c / 2)) - math.log(c)
    p_lo = 1.0 / (1.0 + math.exp(log_m_hi - log_m_lo))

    def propose(m):
        lo = rng.random(m) < p_lo
        u = _open_uniform(rng, m)
        w = np.empty(m)
        w[lo] = 0.5 * u[lo] ** (1.0 / a)
        uh = u[~lo]
        w[~lo] = 1.0 + np.log(uh + (1.0 - uh) * math.exp(-c / 2)) / c
        return w

    def log_accept(w):
        return np.where(w <= 0.5, c * (w - 0.5), (a - 1.0) * np.log(w) - top)

    _rejection_fill(out, rng, propose, log_accept)


def tcch_sample_exact(p: TcchParams, rng, size=None):
    """Exact draws when ``b = 1`` and ``kappa = 1``.

    The density is then ``∝ v^(a-1) e^(-s v)`` on ``(0, 1/nu)``, a gamma
    distribution truncated to the support; draws use its inverse CDF (or a
    rejection step when ``s < 0`` tilts mass toward the right end).
    """
    if p.b != 1.0 or p.kappa != 1.0:
        raise ValueError("the exact tCCH sampler needs b = 1 and kappa = 1")
    m = 1 if size is None else int(np.prod(size))
    w = _power_exp_sample(p.a, p.s / p.nu, rng, m)
    v = w / p.nu
    if size is None:
        return float(v[0])
    return v.reshape(size)


# ---------------------------------------------------------------------------
# slice sampler


@dataclass
class SliceState:
    """Current ``W = nu V`` and auxiliary gamma variable ``T`` (vectorized over chains)."""

    w: np.ndarray
    t: np.ndarray

    @classmethod
    def start(cls, p: TcchParams, rng, size: int = 1, v=None) -> "SliceState":
        """Initial state at ``v`` (default: the mean), with ``T`` drawn from its conditional."""
        if v is None:
            v = np.full(size, tcch_moment(1, p))
        w = np.clip(np.asarray(v, dtype=float).reshape(-1) * p.nu, 1e-300, np.nextafter(1.0, 0.0))
        xi = 1.0 / p.kappa - 1.0
        if p.z > 0:
            t = rng.gamma(p.z, 1.0, w.size) / (1.0 + xi * w)
        else:
            t = np.zeros(w.size)
        return cls(w.copy(), t)

    @property
    def v_over_nu(self):
        return self.w


def _trunc_gamma_below(z, hi, rng):
    """Gamma(z, 1) restricted to (0, hi), elementwise over ``hi``."""
    out = np.empty(hi.size)
    small = hi < 1.0
    idx = np.flatnonzero(small)
    while idx.size:
        t = hi[idx] * _open_uniform(rng, idx.size) ** (1.0 / z)
        ok = np.log(_open_uniform(rng, idx.size)) <= -t
        out[idx[ok]] = t[ok]
        idx = idx[~ok]
    big = ~small
    if np.any(big):
        pm = sc.gammainc(z, hi[big])
        out[big] = sc.gammaincinv(z, _open_uniform(rng, int(big.sum())) * pm)
    return np.maximum(out, np.finfo(float).tiny)


def _trunc_gamma_above(z, lo, rng):
    """Gamma(z, 1) restricted to (lo, inf); ``lo <= 0`` means unrestricted."""
    out = np.empty(lo.size)
    free = lo <= 0
    out[free] = rng.gamma(z, 1.0, int(free.sum()))
    rest = np.flatnonzero(~free)
    if rest.size:
        q = sc.gammaincc(z, lo[rest])
        good = q > 1e-290
        gi = rest[good]
        out[gi] = sc.gammainccinv(z, _open_uniform(rng, gi.size) * q[good])
        tail = rest[~good]
        while tail.size:
            # far tail: lo + Exp(rate) with rate 1 - (z-1)/lo, accept by ratio
            L0 = lo[tail]
            rate = np.where(z > 1, 1.0 - (z - 1.0) / L0, 1.0)
            t = L0 + rng.exponential(1.0, tail.size) / rate
            la = (z - 1.0) * np.log(t / L0) - (1.0 - rate) * (t - L0)
            ok = np.log(_open_uniform(rng, tail.size)) <= la
            out[tail[ok]] = t[ok]
            tail = tail[~ok]
        np.maximum(out, lo, out=out, where=~free)
    return out


def _log_beta_cdf(a, b, x):
    with np.errstate(divide="ignore"):
        return np.log(sc.betainc(a, b, x))


def _trunc_beta(a, b, lo, hi, rng):
    """Beta(a, b) restricted to (lo, hi) elementwise, accurate in both tails."""
    n = lo.size
    out = np.empty(n)
    Plo, Phi = sc.betainc(a, b, lo), sc.betainc(a, b, hi)
    Slo, Shi = sc.betainc(b, a, 1.0 - lo), sc.betainc(b, a, 1.0 - hi)
    U = rng.random(n)
    left = Phi <= 0.5
    right = (~left) & (Plo >= 0.5)
    mid = ~(left | right)
    # left tail / middle: invert the CDF
    lm = left | mid
    target = Plo[lm] + U[lm] * (Phi[lm] - Plo[lm])
    out[lm] = sc.betaincinv(a, b, target)
    # right tail: invert the survival function on 1 - w
    st = Shi[right] + U[right] * (Slo[right] - Shi[right])
    out[right] = 1.0 - sc.betaincinv(b, a, st)
    # Newton polish of the tail inversions on the log scale
    lb = float(sc.betaln(a, b))
    for _ in range(3):
        if np.any(left):
            x = out[left]
            tg = Plo[left] + U[left] * (Phi[left] - Plo[left])
            with np.errstate(divide="ignore", invalid="ignore"):
                f = _log_beta_cdf(a, b, x) - np.log(tg)
                dlog = np.exp((a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - lb - _log_beta_cdf(a, b, x))
                step = f / dlog
            step = np.where(np.isfinite(step), step, 0.0)
            out[left] = np.clip(x - step, lo[left], hi[left])
        if np.any(right):
            y = 1.0 - out[right]
            tg = Shi[right] + U[right] * (Slo[right] - Shi[right])
            with np.errstate(divide="ignore", invalid="ignore"):
                f = _log_beta_cdf(b, a, y) - np.log(tg)
                dlog = np.exp((b - 1) * np.log(y) + (a - 1) * np.log1p(-y) - lb - _log_beta_cdf(b, a, y))
                step = f / dlog
            step = np.where(np.isfinite(step), step, 0.0)
            out[right] = np.clip(1.0 - (y - step), lo[right], hi[right])
    # mass below double precision: rejection from uniform on the interval
    bad = (~np.isfinite(out)) | (out <= lo) | (out >= hi) | (left & (Phi - Plo <= 0)) | (right & (Slo - Shi <= 0))
    idx = np.flatnonzero(bad)
    if idx.size:
        out[idx] = _trunc_beta_reject(a, b, lo[idx], hi[idx], rng)
    return out


def _trunc_beta_reject(a, b, lo, hi, rng):
    out = np.empty(lo.size)
    # log density maximum on [lo, hi]
    mode = np.clip((a - 1) / (a + b - 2) if a + b != 2 else 0.5, lo, hi) if (a > 1 and b > 1) else None

    def logk(x):
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x)

    with np.errstate(divide="ignore"):
        cand = [logk(lo), logk(hi)] + ([logk(mode)] if mode is not None else [])
        top = np.max(np.vstack(cand), axis=0)
    todo = np.arange(lo.size)
    while todo.size:
        x = lo[todo] + rng.random(todo.size) * (hi[todo] - lo[todo])
        ok = np.log(_open_uniform(rng, todo.size)) <= logk(x) - top[todo]
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _trunc_gamma_scalar(z, lo, hi, rng):
    """Gamma(z, 1) on (lo, hi) where one of the bounds is trivial (0 or inf)."""
    if hi < math.inf:
        if hi < 1.0:
            while True:
                t = hi * (1.0 - rng.random()) ** (1.0 / z)
                if math.log(1.0 - rng.random()) <= -t:
                    return max(t, _TINY)
        pm = sc.gammainc(z, hi)
        return max(float(sc.gammaincinv(z, (1.0 - rng.random()) * pm)), _TINY)
    if lo <= 0.0:
        return max(rng.gamma(z), _TINY)
    return float(_trunc_gamma_above(z, np.array([lo]), rng)[0])


def _trunc_beta_scalar(a, b, lo, hi, rng):
    """Beta(a, b) on (lo, hi), inverting whichever tail the interval sits in."""
    u = rng.random()
    Phi = sc.betainc(a, b, hi)
    if Phi <= 0.5:
        Plo = sc.betainc(a, b, lo) if lo > 0 else 0.0
        if Phi - Plo > 0:
            tg = Plo + u * (Phi - Plo)
            x = float(sc.betaincinv(a, b, tg))
            if tg < 1e-6:
                x = _polish(a, b, x, tg, lo, hi)
            if lo <= x <= hi:
                return x
    else:
        Slo = sc.betainc(b, a, 1.0 - lo)
        if Slo <= 0.5:
            Shi = sc.betainc(b, a, 1.0 - hi) if hi < 1 else 0.0
            if Slo - Shi > 0:
                tg = Shi + u * (Slo - Shi)
                y = float(sc.betaincinv(b, a, tg))
                if tg < 1e-6:
                    y = _polish(b, a, y, tg, 1.0 - hi, 1.0 - lo)
                x = 1.0 - y
                if lo <= x <= hi:
                    return x
        else:
            Plo = sc.betainc(a, b, lo) if lo > 0 else 0.0
            x = float(sc.betaincinv(a, b, Plo + u * (Phi - Plo)))
            if lo <= x <= hi:
                return x
    return float(_trunc_beta_reject(a, b, np.array([lo]), np.array([hi]), rng)[0])


def _polish(a, b, x, target, lo, hi):
    """Newton steps on log CDF(x) = log target."""
    lb = sc.betaln(a, b)
    for _ in range(2):
        if not 0 < x < 1:
            break
        F = sc.betainc(a, b, x)
        if not F > 0:
            break
        dens = math.exp((a - 1) * math.log(x) + (b - 1) * math.log1p(-x) - lb)
        x = min(max(x - (math.log(F) - math.log(target)) * F / dens, lo), hi)
    return x


_TINY = np.finfo(float).tiny
_ONE = float(np.nextafter(1.0, 0.0))


def _slice_step_scalar(a, b, z, xi, zeta, w, t, rng):
    lo, hi = 0.0, 1.0
    if zeta != 0.0:
        lu1 = -zeta * w + math.log(1.0 - rng.random())
        if zeta > 0:
            hi = min(hi, -lu1 / zeta)
        else:
            lo = max(lo, -lu1 / zeta)
    if z > 0 and xi != 0.0:
        lu2 = -xi * w * t + math.log(1.0 - rng.random())
        bound = -lu2 / (xi * w)
        if xi > 0:
            t = _trunc_gamma_scalar(z, 0.0, bound, rng)
            hi = min(hi, -lu2 / (xi * t))
        else:
            t = _trunc_gamma_scalar(z, bound, math.inf, rng)
            lo = max(lo, -lu2 / (xi * t))
    elif z > 0:
        t = rng.gamma(z)
    lo, hi = min(lo, w), max(min(hi, 1.0), w)
    w = min(max(_trunc_beta_scalar(a, b, lo, hi, rng), _TINY), _ONE)
    return w, t


def tcch_sample_slice(p: TcchParams, state, rng, steps: int = 1):
    """Advance a slice-sampling chain for ``V ~ tCCH(p)``.

    Works on ``W = nu V`` with ``xi = 1/kappa - 1`` and ``zeta = s/nu``::

        f(w) ∝ w^(a-1)(1-w)^(b-1) (1 + xi w)^(-z) e^(-zeta w)
             = E_T[...],  T ~ Gamma(z, 1),  (1 + xi w)^(-z) = E[e^(-xi w T)]

    Each transition updates ``U1 | W``, ``U2 | T, W``, ``T | U2, W`` (a
    truncated gamma) and ``W | U1, U2, T`` (a truncated beta).  Signs of
    ``xi`` and ``zeta`` only change which side each truncation bounds.
    When ``z = 0`` the compound factor is absent and ``T``, ``U2`` are skipped.

    Parameters
    ----------
    p : TcchParams
    state : SliceState or float
        A float is taken as the current ``V`` of a single chain.
    rng : numpy.random.Generator
    steps : int
        Number of transitions.

    Returns
    -------
    SliceState or float
        Same kind as ``state``; the state is updated in place when a
        ``SliceState`` is passed.
    """
    if p.z < 0:
        raise ValueError("slice sampler requires z >= 0")
    scalar = not isinstance(state, SliceState)
    if scalar:
        if not 0 < state < p.upper:
            raise ValueError("state outside the support")
        state = SliceState.start(p, rng, 1, v=[state])
    xi = 1.0 / p.kappa - 1.0
    zeta = p.s / p.nu
    w, t = state.w, state.t
    m = w.size
    tiny = np.finfo(float).tiny
    one = np.nextafter(1.0, 0.0)
    if m == 1:
        wf, tf = float(w[0]), float(t[0])
        for _ in range(steps):
            wf, tf = _slice_step_scalar(p.a, p.b, p.z, xi, zeta, wf, tf, rng)
        state.w, state.t = np.array([wf]), np.array([tf])
        return float(wf / p.nu) if scalar else state
    for _ in range(steps):
        lo = np.zeros(m)
        hi = np.ones(m)
        if zeta != 0.0:
            lu1 = -zeta * w + np.log(_open_uniform(rng, m))
            if zeta > 0:
                hi = np.minimum(hi, -lu1 / zeta)
            else:
                lo = np.maximum(lo, -lu1 / zeta)
        if p.z > 0 and xi != 0.0:
            lu2 = -xi * w * t + np.log(_open_uniform(rng, m))
            if xi > 0:
                t = _trunc_gamma_below(p.z, -lu2 / (xi * w), rng)
                hi = np.minimum(hi, -lu2 / (xi * t))
            else:
                t = _trunc_gamma_above(p.z, -lu2 / (xi * w), rng)
                lo = np.maximum(lo, -lu2 / (xi * t))
        elif p.z > 0:
            t = rng.gamma(p.z, 1.0, m)
        # current w always satisfies the constraints; guard rounding
        lo = np.minimum(lo, w)
        hi = np.maximum(hi, w)
        w = np.clip(_trunc_beta(p.a, p.b, lo, np.minimum(hi, 1.0), rng), tiny, one)
    state.w, state.t = w, t
    if scalar:
        return float(w[0] / p.nu)
    return state
