"""Scalar special functions, a bounded scalar maximizer and seeded streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .exceptions import DomainError, OptimizationError

__all__ = [
    "RngStream",
    "std_normal_cdf",
    "std_normal_quantile",
    "bivariate_normal_cdf",
    "debye1",
    "maximize_scalar",
]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream addressed by ``(seed, stream_id, path)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys and
    drive a counter-based Philox generator, so a stream's output depends only
    on its address and never on the order in which streams are consumed.

    Examples
    --------
    >>> a = RngStream(42, 3).generator().random(2)
    >>> b = RngStream(42, 3).generator().random(2)
    >>> bool((a == b).all())
    True
    """

    seed: int
    stream_id: int = 0
    path: tuple = field(default=())

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise DomainError("stream_id must be non-negative")

    def substream(self, key: int) -> "RngStream":
        """Independent child stream (e.g. data vs. Monte Carlo within a run)."""
        return RngStream(self.seed, self.stream_id, self.path + (int(key),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self.path)
        return np.random.Generator(np.random.Philox(ss))


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("argument must be finite")
    return x


def std_normal_cdf(x):
    """Standard normal distribution function (array friendly)."""
    x = _check_finite(x)
    out = special.ndtr(x)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` for ``p`` in the open unit interval."""
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise DomainError("p must lie in (0, 1)")
    out = special.ndtri(p)
    return float(out) if out.ndim == 0 else out


def _bvn_scalar(x, y, rho):
    if x == -math.inf or y == -math.inf:
        return 0.0
    if x == math.inf:
        return float(special.ndtr(y))
    if y == math.inf:
        return float(special.ndtr(x))
    base = special.ndtr(x) * special.ndtr(y)
    if rho == 0.0:
        return float(base)
    # Sheppard-type single integral over the angle asin(rho).
    s = x * x + y * y
    xy = x * y

    def integrand(t):
        c2 = math.cos(t) ** 2
        return math.exp(-(s - 2.0 * xy * math.sin(t)) / (2.0 * c2))

    upper = math.asin(rho)
    val, _ = integrate.quad(integrand, 0.0, upper, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(min(1.0, max(0.0, base + val / (2.0 * math.pi))))


def bivariate_normal_cdf(x, y, rho):
    """P(X <= x, Y <= y) for standard bivariate normal with correlation ``rho``.

    Infinite ``x`` / ``y`` are accepted as limits. Arrays broadcast.
    """
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise DomainError("rho must lie in (-1, 1)")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.isnan(x)) or np.any(np.isnan(y)):
        raise DomainError("arguments must not be NaN")
    out = np.vectorize(_bvn_scalar, otypes=[float])(x, y, rho)
    return float(out) if out.ndim == 0 else out


def _debye_integrand(s):
    return 1.0 if s == 0.0 else s / math.expm1(s)


def debye1(t):
    """First Debye function ``(1/t) * int_0^t s / (exp(s) - 1) ds``; 1 at 0."""
    t = float(t)
    if not math.isfinite(t):
        raise DomainError("t must be finite")
    if t == 0.0:
        return 1.0
    val, _ = integrate.quad(_debye_integrand, 0.0, t, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val / t


def maximize_scalar(f, lo, hi, tol=1e-6):
    """Bounded Brent maximization of ``f`` on ``[lo, hi]``.

    Non-finite evaluations are treated as ``-inf``.

    Returns
    -------
    argmax, max : float
    """
    if not lo < hi:
        raise DomainError("need lo < hi")

    def neg(x):
        v = f(x)
        return -v if np.isfinite(v) else np.inf

    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": tol, "maxiter": 500})
    if not np.isfinite(res.fun):
        raise OptimizationError("objective is non-finite on the whole interval")
    return float(res.x), float(-res.fun)
