"""One-parameter bivariate copula families and their rotations.

Every public function takes a :class:`PairCopulaSpec` plus array arguments
and broadcasts like a numpy ufunc.  Conventions:

* ``h(spec, u, v)`` is the conditional distribution ``dC(u, v)/dv``, i.e.
  ``P(U <= u | V = v)``.
* ``h_transpose(spec, u, v)`` is ``dC(u, v)/du`` = ``P(V <= v | U = u)``.
* Rotations act on the base copula ``C`` as
  ``C90(u, v) = v - C(1-u, v)``, ``C180(u, v) = u + v - 1 + C(1-u, 1-v)`` and
  ``C270(u, v) = u - C(u, 1-v)``; ``theta`` always refers to the base copula.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate, interpolate, optimize, special

from .exceptions import DomainError, OptimizationError
from .numerics import bivariate_normal_cdf, debye1, maximize_scalar

__all__ = [
    "Family",
    "PairCopulaSpec",
    "PairFit",
    "INDEPENDENCE",
    "ALL_CANDIDATES",
    "cdf",
    "pdf",
    "logpdf",
    "h",
    "h_transpose",
    "h_inv",
    "tau_of",
    "param_of_tau",
    "fit_pair",
    "loglik",
    "transpose",
]

EPS = 1e-10


class Family(str, Enum):
    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    FRANK = "frank"
    JOE = "joe"


ROTATIONS = (0, 90, 180, 270)
_UNROTATED = {Family.INDEPENDENCE, Family.GAUSSIAN, Family.FRANK}

# MLE search ranges for the base parameter.
BOUNDS = {
    Family.GAUSSIAN: (-0.9999, 0.9999),
    Family.CLAYTON: (1e-4, 28.0),
    Family.GUMBEL: (1.0, 17.0),
    Family.FRANK: (-35.0, 35.0),
    Family.JOE: (1.0 + 1e-4, 30.0),
}


@dataclass(frozen=True)
class PairCopulaSpec:
    """Family, rotation (degrees) and base parameter of a pair copula."""

    family: Family
    rotation: int = 0
    theta: float | None = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if self.rotation not in ROTATIONS:
            raise DomainError(f"rotation must be one of {ROTATIONS}")
        if fam in _UNROTATED and self.rotation != 0:
            raise DomainError(f"{fam.value} copula takes no rotation")
        if fam is Family.INDEPENDENCE:
            if self.theta is not None:
                raise DomainError("independence copula has no parameter")
            return
        if self.theta is None:
            raise DomainError(f"{fam.value} copula needs a parameter")
        th = float(self.theta)
        object.__setattr__(self, "theta", th)
        ok = {
            Family.GAUSSIAN: -1.0 < th < 1.0,
            Family.CLAYTON: th > 0.0,
            Family.GUMBEL: th >= 1.0,
            Family.FRANK: th != 0.0 and math.isfinite(th),
            Family.JOE: th > 1.0,
        }[fam]
        if not ok or not math.isfinite(th):
            raise DomainError(f"invalid {fam.value} parameter {th!r}")

    @property
    def n_params(self) -> int:
        return 0 if self.family is Family.INDEPENDENCE else 1

    @property
    def is_independence(self) -> bool:
        return self.family is Family.INDEPENDENCE

    def to_dict(self) -> dict:
        return {"family": self.family.value, "rotation": self.rotation, "theta": self.theta}

    @classmethod
    def from_dict(cls, d) -> "PairCopulaSpec":
        return cls(Family(d["family"]), int(d.get("rotation", 0)), d.get("theta"))

    def __str__(self):
        if self.is_independence:
            return "independence"
        rot = f"{self.rotation}" if self.rotation else ""
        return f"{self.family.value}{rot}({self.theta:.4g})"


INDEPENDENCE = PairCopulaSpec(Family.INDEPENDENCE)


def _clip(x):
    return np.clip(np.asarray(x, dtype=float), EPS, 1.0 - EPS)


# ---------------------------------------------------------------------------
# base (unrotated) families
# ---------------------------------------------------------------------------

def _newton_hinv(hfun, pdffun, w, v, theta):
    """Invert ``u -> hfun(u, v)`` by bracketed Newton iteration."""
    w, v = np.broadcast_arrays(w, v)
    shape = w.shape
    w = w.astype(float).ravel()
    v = v.astype(float).ravel()
    lo = np.zeros_like(w)
    hi = np.ones_like(w)
    u = w.copy()
    active = np.ones(w.shape, dtype=bool)
    for _ in range(200):
        idx = np.nonzero(active)
        if idx[0].size == 0:
            break
        ua, va, wa = u[idx], v[idx], w[idx]
        diff = hfun(ua, va, theta) - wa
        below = diff < 0
        lo_a = np.where(below, ua, lo[idx])
        hi_a = np.where(below, hi[idx], ua)
        dens = np.exp(pdffun(ua, va, theta))
        with np.errstate(divide="ignore", invalid="ignore"):
            step = ua - diff / dens
        bad = ~np.isfinite(step) | (step <= lo_a) | (step >= hi_a)
        step = np.where(bad, 0.5 * (lo_a + hi_a), step)
        done = (np.abs(diff) < 1e-13) | (hi_a - lo_a <= 4.0 * np.spacing(hi_a)) | (step == ua)
        u[idx] = np.where(done, ua, step)
        lo[idx], hi[idx] = lo_a, hi_a
        active[idx] = ~done
    if np.any(active):
        raise OptimizationError("h-function inversion did not converge")
    return u.reshape(shape)


class _Gaussian:
    @staticmethod
    def cdf(u, v, rho):
        return bivariate_normal_cdf(special.ndtri(u), special.ndtri(v), rho)

    @staticmethod
    def logpdf(u, v, rho):
        x, y = special.ndtri(u), special.ndtri(v)
        r2 = 1.0 - rho * rho
        return -0.5 * math.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)

    @staticmethod
    def h(u, v, rho):
        x, y = special.ndtri(u), special.ndtri(v)
        return special.ndtr((x - rho * y) / math.sqrt(1.0 - rho * rho))

    @staticmethod
    def hinv(w, v, rho):
        z, y = special.ndtri(w), special.ndtri(v)
        return special.ndtr(z * math.sqrt(1.0 - rho * rho) + rho * y)

    @staticmethod
    def tau(rho):
        return 2.0 / math.pi * math.asin(rho)


def _clayton_logS(u, v, th):
    a = -th * np.log(u)
    b = -th * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


class _Clayton:
    @staticmethod
    def cdf(u, v, th):
        return np.exp(-_clayton_logS(u, v, th) / th)

    @staticmethod
    def logpdf(u, v, th):
        return (math.log1p(th) - (th + 1.0) * (np.log(u) + np.log(v))
                - (1.0 / th + 2.0) * _clayton_logS(u, v, th))

    @staticmethod
    def h(u, v, th):
        return np.exp(-(th + 1.0) * np.log(v) - (1.0 / th + 1.0) * _clayton_logS(u, v, th))

    @staticmethod
    def hinv(w, v, th):
        b = -th * np.log(v)
        q = np.expm1(-th / (th + 1.0) * np.log(w))
        log_x = np.logaddexp(0.0, b + np.log(q))
        return np.exp(-log_x / th)

    @staticmethod
    def tau(th):
        return th / (th + 2.0)


def _gumbel_parts(u, v, th):
    x = -np.log(u)
    y = -np.log(v)
    lx, ly = np.log(x), np.log(y)
    log_t = np.logaddexp(th * lx, th * ly)
    a = np.exp(log_t / th)
    return x, y, lx, ly, log_t, a


class _Gumbel:
    @staticmethod
    def cdf(u, v, th):
        return np.exp(-_gumbel_parts(u, v, th)[5])

    @staticmethod
    def logpdf(u, v, th):
        x, y, lx, ly, log_t, a = _gumbel_parts(u, v, th)
        return (-a + x + y + (th - 1.0) * (lx + ly) + (1.0 / th - 2.0) * log_t
                + np.log(a + th - 1.0))

    @staticmethod
    def h(u, v, th):
        x, y, lx, ly, log_t, a = _gumbel_parts(u, v, th)
        return np.exp(-a + y + (th - 1.0) * ly + (1.0 / th - 1.0) * log_t)

    @staticmethod
    def hinv(w, v, th):
        if th == 1.0:
            return np.broadcast_arrays(w, v)[0].astype(float)
        return _newton_hinv(_Gumbel.h, _Gumbel.logpdf, w, v, th)

    @staticmethod
    def tau(th):
        return 1.0 - 1.0 / th


def _frank_log_denominator(u, v, th):
    # log|expm1(-th) + expm1(-th u) expm1(-th v)|, written as a sum of same-signed terms
    a = -th * u + np.log(np.abs(np.expm1(-th * (1.0 - u))))
    b = -th * v + np.log(np.abs(np.expm1(-th * u)))
    return np.logaddexp(a, b)


class _Frank:
    @staticmethod
    def cdf(u, v, th):
        return -(_frank_log_denominator(u, v, th) - math.log(abs(math.expm1(-th)))) / th

    @staticmethod
    def logpdf(u, v, th):
        return (math.log(abs(th * math.expm1(-th))) - th * (u + v)
                - 2.0 * _frank_log_denominator(u, v, th))

    @staticmethod
    def h(u, v, th):
        return np.exp(-th * v + np.log(np.abs(np.expm1(-th * u)))
                      - _frank_log_denominator(u, v, th))

    @staticmethod
    def hinv(w, v, th):
        lw, lv = np.log(w), -th * v + np.log1p(-w)
        return (np.logaddexp(lv, lw) - np.logaddexp(lv, lw - th)) / th

    @staticmethod
    def tau(th):
        return 1.0 - 4.0 / th * (1.0 - debye1(th))


def _joe_logS(u, v, th):
    la = th * np.log1p(-u)
    lb = th * np.log1p(-v)
    return np.logaddexp(la, lb + np.log1p(-np.exp(la))), la


class _Joe:
    @staticmethod
    def cdf(u, v, th):
        return -np.expm1(_joe_logS(u, v, th)[0] / th)

    @staticmethod
    def logpdf(u, v, th):
        log_s, _ = _joe_logS(u, v, th)
        return ((1.0 / th - 2.0) * log_s + (th - 1.0) * (np.log1p(-u) + np.log1p(-v))
                + np.log(th - 1.0 + np.exp(log_s)))

    @staticmethod
    def h(u, v, th):
        log_s, la = _joe_logS(u, v, th)
        return np.exp((1.0 / th - 1.0) * log_s + (th - 1.0) * np.log1p(-v)
                      + np.log1p(-np.exp(la)))

    @staticmethod
    def hinv(w, v, th):
        return _newton_hinv(_Joe.h, _Joe.logpdf, w, v, th)

    @staticmethod
    def tau(th):
        return _joe_tau(th)


@lru_cache(maxsize=4096)
def _joe_tau(th):
    # Archimedean identity tau = 1 + 4 * int_0^1 phi/phi' with phi = -log(1 - (1-t)^th),
    # written in s = 1 - t.
    def integrand(s):
        st = s ** th
        ratio = math.log1p(-st) / st if st > 0.0 else -1.0
        return ratio * s * (1.0 - st) / th

    val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    return 1.0 + 4.0 * val


@lru_cache(maxsize=1)
def _joe_tau_grid():
    # monotone interpolant theta(tau), used for bracketing and fast initial values
    thetas = 1.0 + np.geomspace(1e-6, 200.0, 400)
    taus = np.array([_joe_tau(float(t)) for t in thetas])
    return interpolate.PchipInterpolator(taus, np.log(thetas - 1.0)), taus[0], taus[-1]


def _joe_theta_approx(tau):
    interp, lo, hi = _joe_tau_grid()
    tau = min(max(tau, lo), hi)
    return 1.0 + float(np.exp(interp(tau)))


_BASE = {
    Family.GAUSSIAN: _Gaussian,
    Family.CLAYTON: _Clayton,
    Family.GUMBEL: _Gumbel,
    Family.FRANK: _Frank,
    Family.JOE: _Joe,
}


# ---------------------------------------------------------------------------
# rotated interface
# ---------------------------------------------------------------------------

def transpose(spec: PairCopulaSpec) -> PairCopulaSpec:
    """Copula of ``(V, U)`` when ``spec`` is the copula of ``(U, V)``."""
    if spec.rotation in (90, 270):
        return PairCopulaSpec(spec.family, 360 - spec.rotation, spec.theta)
    return spec


def cdf(spec: PairCopulaSpec, u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if spec.is_independence:
        return u * v
    base, th, r = _BASE[spec.family], spec.theta, spec.rotation
    if r == 0:
        return base.cdf(u, v, th)
    if r == 90:
        return v - base.cdf(1.0 - u, v, th)
    if r == 180:
        return u + v - 1.0 + base.cdf(1.0 - u, 1.0 - v, th)
    return u - base.cdf(u, 1.0 - v, th)


def logpdf(spec: PairCopulaSpec, u, v):
    u, v = _clip(u), _clip(v)
    if spec.is_independence:
        return np.zeros(np.broadcast(u, v).shape)
    base, th, r = _BASE[spec.family], spec.theta, spec.rotation
    if r in (90, 180):
        u = 1.0 - u
    if r in (180, 270):
        v = 1.0 - v
    return base.logpdf(u, v, th)


def pdf(spec: PairCopulaSpec, u, v):
    return np.exp(logpdf(spec, u, v))


def h(spec: PairCopulaSpec, u, v):
    """Conditional distribution function ``P(U <= u | V = v)``."""
    u, v = _clip(u), _clip(v)
    if spec.is_independence:
        return np.broadcast_arrays(u, v)[0].copy()
    base, th, r = _BASE[spec.family], spec.theta, spec.rotation
    if r == 0:
        out = base.h(u, v, th)
    elif r == 90:
        out = 1.0 - base.h(1.0 - u, v, th)
    elif r == 180:
        out = 1.0 - base.h(1.0 - u, 1.0 - v, th)
    else:
        out = base.h(u, 1.0 - v, th)
    return np.clip(out, 0.0, 1.0)


def h_transpose(spec: PairCopulaSpec, u, v):
    """Conditional distribution function ``P(V <= v | U = u)``."""
    return h(transpose(spec), v, u)


def h_inv(spec: PairCopulaSpec, w, v):
    """Solve ``h(spec, u, v) = w`` for ``u``."""
    w, v = _clip(w), _clip(v)
    if spec.is_independence:
        return np.broadcast_arrays(w, v)[0].copy()
    base, th, r = _BASE[spec.family], spec.theta, spec.rotation
    if r == 0:
        out = base.hinv(w, v, th)
    elif r == 90:
        out = 1.0 - base.hinv(1.0 - w, v, th)
    elif r == 180:
        out = 1.0 - base.hinv(1.0 - w, 1.0 - v, th)
    else:
        out = base.hinv(w, 1.0 - v, th)
    return _clip(out)


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------

def tau_of(spec: PairCopulaSpec) -> float:
    """Kendall's tau implied by ``spec``."""
    if spec.is_independence:
        return 0.0
    t = _BASE[spec.family].tau(spec.theta)
    return -t if spec.rotation in (90, 270) else t


def _frank_theta(tau):
    # tau is odd in theta, so solve for |tau| on the positive half-line
    a = abs(tau)
    f = lambda th: _Frank.tau(th) - a
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise DomainError("tau not attainable by the Frank family")
    theta = optimize.brentq(f, 1e-10, hi, xtol=1e-14, rtol=1e-14, maxiter=300)
    return math.copysign(theta, tau)


def _joe_theta(tau):
    guess = _joe_theta_approx(tau)
    f = lambda th: _joe_tau(th) - tau
    lo, hi = max(1.0 + 1e-12, guess - 0.05 * (guess - 1.0) - 1e-9), guess * 1.05 + 1e-6
    while f(lo) > 0:
        lo = 1.0 + (lo - 1.0) / 10.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise DomainError("tau not attainable by the Joe family")
    return optimize.brentq(f, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=200)


def param_of_tau(family, rotation: int, tau: float) -> PairCopulaSpec:
    """Spec with the given family/rotation whose Kendall's tau equals ``tau``."""
    family = Family(family)
    tau = float(tau)
    if family is Family.INDEPENDENCE:
        if tau != 0.0:
            raise DomainError("independence copula only attains tau = 0")
        return INDEPENDENCE
    if not -1.0 < tau < 1.0:
        raise DomainError("tau must lie in (-1, 1)")
    base_tau = -tau if rotation in (90, 270) else tau
    if family is Family.GAUSSIAN:
        theta = math.sin(math.pi * tau / 2.0)
    elif family is Family.FRANK:
        if tau == 0.0:
            raise DomainError("Frank family does not attain tau = 0")
        theta = _frank_theta(tau)
    elif family is Family.GUMBEL:
        if base_tau < 0:
            raise DomainError("tau not attainable by this Gumbel rotation")
        theta = 1.0 / (1.0 - base_tau)
    elif family is Family.CLAYTON:
        if base_tau <= 0:
            raise DomainError("tau not attainable by this Clayton rotation")
        theta = 2.0 * base_tau / (1.0 - base_tau)
    else:
        if base_tau <= 0:
            raise DomainError("tau not attainable by this Joe rotation")
        theta = _joe_theta(base_tau)
    return PairCopulaSpec(family, rotation, theta)


def _theta_approx(family, base_tau):
    """Cheap inverse of tau on the base scale (used for search windows)."""
    if family is Family.GAUSSIAN:
        return math.sin(math.pi * base_tau / 2.0)
    if family is Family.CLAYTON:
        return 2.0 * base_tau / (1.0 - base_tau)
    if family is Family.GUMBEL:
        return 1.0 / (1.0 - base_tau)
    if family is Family.FRANK:
        return _frank_theta(base_tau)
    return _joe_theta_approx(base_tau)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

ALL_CANDIDATES = tuple(
    [(Family.INDEPENDENCE, 0), (Family.GAUSSIAN, 0)]
    + [(f, r) for f in (Family.CLAYTON, Family.GUMBEL) for r in ROTATIONS]
    + [(Family.FRANK, 0)]
    + [(Family.JOE, r) for r in ROTATIONS]
)


class PairFit(NamedTuple):
    spec: PairCopulaSpec
    loglik: float
    aic: float


def loglik(spec: PairCopulaSpec, u, v) -> float:
    return float(np.sum(logpdf(spec, u, v)))


def _search_window(family, base_tau, sign=1.0):
    lo, hi = BOUNDS[family]
    if family is Family.FRANK:
        lo, hi = (1e-4, hi) if sign > 0 else (lo, -1e-4)
    t_lo, t_hi = base_tau - 0.2, base_tau + 0.2
    if family in (Family.GAUSSIAN,):
        t_lo, t_hi = max(t_lo, -0.999), min(t_hi, 0.999)
        return max(lo, _theta_approx(family, t_lo)), min(hi, _theta_approx(family, t_hi)), lo, hi
    if family is Family.FRANK:
        a = abs(base_tau)
        a_lo, a_hi = max(a - 0.2, 1e-5), min(a + 0.2, 0.9)
        w = sorted((sign * abs(_theta_approx(family, a_lo)), sign * abs(_theta_approx(family, a_hi))))
        return max(lo, w[0]), min(hi, w[1]), lo, hi
    t_lo, t_hi = max(t_lo, 1e-5), min(max(t_hi, 2e-5), 0.95)
    return max(lo, _theta_approx(family, t_lo)), min(hi, _theta_approx(family, t_hi)), lo, hi


def _fit_theta(family, rotation, u, v, base_tau, sign):
    def objective(th):
        return loglik(PairCopulaSpec(family, rotation, th), u, v)

    w_lo, w_hi, lo, hi = _search_window(family, base_tau, sign)
    if not w_lo < w_hi:
        w_lo, w_hi = lo, hi
    th, ll = maximize_scalar(objective, w_lo, w_hi, tol=1e-6 * max(1.0, abs(w_hi)))
    span = w_hi - w_lo
    touches = (th - w_lo < 1e-3 * span and w_lo > lo) or (w_hi - th < 1e-3 * span and w_hi < hi)
    if touches:
        th, ll = maximize_scalar(objective, lo, hi, tol=1e-6 * max(1.0, abs(hi)))
    if family is Family.GUMBEL and th <= 1.0:
        th = 1.0
    return th, ll


def fit_pair(u, v, candidates=None, tau_hat=None) -> PairFit:
    """Maximum likelihood fit with AIC family selection.

    Parameters
    ----------
    u, v : array_like
        Pseudo-observations in (0, 1), at least 10 of them.
    candidates : iterable of (Family, rotation), optional
        Admissible families/rotations. Defaults to :data:`ALL_CANDIDATES`.
        Rotations incompatible with the sign of the empirical Kendall's tau
        are skipped; Independence always competes with ``loglik = 0``.
    tau_hat : float, optional
        Precomputed empirical Kendall's tau of ``(u, v)``.
    """
    from .dissmann import kendall_tau_empirical  # avoids an import cycle

    u, v = _clip(u), _clip(v)
    if u.shape != v.shape or u.ndim != 1:
        raise DomainError("u and v must be 1-d arrays of equal length")
    if u.size < 10:
        raise DomainError("need at least 10 observations")
    cands = ALL_CANDIDATES if candidates is None else tuple(
        (Family(f), int(r)) for f, r in candidates)
    order = {c: i for i, c in enumerate(ALL_CANDIDATES)}
    cands = sorted(set(cands), key=lambda c: order.get(c, len(order)))
    if tau_hat is None:
        tau_hat = kendall_tau_empirical(u, v)
    sign = 1.0 if tau_hat >= 0 else -1.0

    best = PairFit(INDEPENDENCE, 0.0, 0.0)
    for family, rotation in cands:
        if family is Family.INDEPENDENCE:
            continue
        if family in _UNROTATED:
            if rotation != 0:
                continue
            base_tau = tau_hat
        else:
            if rotation not in ((0, 180) if tau_hat >= 0 else (90, 270)):
                continue
            base_tau = abs(tau_hat)
        th, ll = _fit_theta(family, rotation, u, v, base_tau, sign)
        if family is Family.GUMBEL and th == 1.0:
            continue
        aic = -2.0 * ll + 2.0
        if aic < best.aic:
            best = PairFit(PairCopulaSpec(family, rotation, th), ll, aic)
    return best
