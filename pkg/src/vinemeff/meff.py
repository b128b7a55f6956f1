"""Effective numbers of tests, local-level calibration and test decisions.

For a block of statistics ``T_1 .. T_m`` (in block order) with critical
values at the common local level ``a`` the order-``i`` effective number is

    M_eff = 1 + xi(i) + sum_{j >= max(i, 2)} log(gamma_{j,i}) / log(1 - a),

where ``gamma_{j,i} = P(T_j <= c_j | T_h <= c_h, j - i < h < j)``.  The
optimized order-2 version replaces ``gamma_{j,2}`` by the largest pairwise
conditional probability over all preceding block members.  Block values are
summed and the local level solves ``1 - (1 - a)^{M_eff(a)} = alpha``.

Since the null marginals are continuous, ``T_j <= c_j`` is the event
``U_j <= 1 - a`` for the copula sample ``U``; probabilities are estimated on
that scale.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import sampler
from .exceptions import CalibrationError, ConfigurationError, DegenerateError, DomainError
from .grouping import Grouping
from .numerics import RngStream

__all__ = [
    "MarginalNull",
    "STD_NORMAL",
    "HALF_NORMAL",
    "get_marginal",
    "Calibration",
    "gamma_mc",
    "gamma_copula",
    "meff_block",
    "calibrate",
    "decide",
]


@dataclass(frozen=True)
class MarginalNull:
    """Known null distribution of one test statistic."""

    name: str
    cdf: object = field(repr=False, compare=False)
    quantile: object = field(repr=False, compare=False)


def _half_normal_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 2.0 * special.ndtr(x) - 1.0, 0.0)


def _half_normal_quantile(p):
    return special.ndtri((1.0 + np.asarray(p, dtype=float)) / 2.0)


STD_NORMAL = MarginalNull("std_normal", special.ndtr, special.ndtri)
HALF_NORMAL = MarginalNull("half_normal", _half_normal_cdf, _half_normal_quantile)
_MARGINALS = {m.name: m for m in (STD_NORMAL, HALF_NORMAL)}


def get_marginal(name) -> MarginalNull:
    if isinstance(name, MarginalNull):
        return name
    try:
        return _MARGINALS[str(name)]
    except KeyError:
        raise ConfigurationError(f"unknown marginal {name!r}; choose from {sorted(_MARGINALS)}") from None


@dataclass(frozen=True)
class Calibration:
    alpha: float
    alpha_loc: float
    order: int
    optimized: bool
    critical_values: tuple
    blocks: tuple
    block_meffs: tuple
    total_meff: float
    bound: float
    mc_size: int
    seed: object = None
    marginals: tuple = ()
    iterations: int = 0

    @property
    def M(self):
        return len(self.critical_values)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "alpha_loc": self.alpha_loc,
            "order": self.order,
            "optimized": self.optimized,
            "critical_values": list(self.critical_values),
            "blocks": [list(b) for b in self.blocks],
            "block_meffs": list(self.block_meffs),
            "total_meff": self.total_meff,
            "bound": self.bound,
            "mc_size": self.mc_size,
            "seed": self.seed,
            "marginals": list(self.marginals),
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d) -> "Calibration":
        d = dict(d)
        d["critical_values"] = tuple(float(c) for c in d["critical_values"])
        d["blocks"] = tuple(tuple(b) for b in d["blocks"])
        d["block_meffs"] = tuple(float(m) for m in d["block_meffs"])
        d["marginals"] = tuple(d.get("marginals", ()))
        return cls(**d)

    def to_json(self, path=None, indent=2) -> str:
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path_or_text) -> "Calibration":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        cs = np.asarray(self.critical_values)
        c_text = f"{cs[0]:.4f}" if np.allclose(cs, cs[0]) else ", ".join(f"{c:.4f}" for c in cs)
        lines = [
            f"alpha      {self.alpha:g}",
            f"alpha_loc  {self.alpha_loc:.6g}",
            f"c          {c_text}",
            f"total M_eff {self.total_meff:.4f}",
            f"bound      {self.bound:.8f}",
        ]
        for b, m in zip(self.blocks, self.block_meffs):
            lines.append(f"  block {','.join(str(x) for x in b)}: M_eff {m:.4f}")
        return "\n".join(lines)


def gamma_mc(tail_sample, c, j: int, i: int) -> float:
    """Empirical ``P(T_j <= c_j | T_h <= c_h for j - i < h < j)``.

    Columns of ``tail_sample`` are in block order; ``j`` is 0-based and the
    window is truncated at the first column.
    """
    t = np.asarray(tail_sample, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), (t.shape[1],))
    if i < 1 or not 0 <= j < t.shape[1]:
        raise DomainError("need i >= 1 and 0 <= j < number of columns")
    lo = max(0, j - i + 1)
    below = t[:, lo:j + 1] <= c[lo:j + 1]
    den = np.all(below[:, :-1], axis=1) if j > lo else np.ones(t.shape[0], dtype=bool)
    n_den = int(den.sum())
    if n_den == 0:
        raise DegenerateError("conditioning event has no Monte Carlo hits; increase mc_size")
    return float(np.sum(den & below[:, -1]) / n_den)


def gamma_copula(copula_cdf, alpha_loc: float, i: int) -> float:
    """Ratio ``C_{1..i}(1-a, ..) / C_{1..i-1}(1-a, ..)`` for a copula handle.

    ``copula_cdf`` maps a point in the unit cube of dimension ``d`` to the
    copula of the ``d`` leading coordinates (``d = i`` and ``d = i - 1``).
    """
    if not 0.0 < alpha_loc < 1.0:
        raise DomainError("alpha_loc must lie in (0, 1)")
    p = 1.0 - alpha_loc
    num = float(copula_cdf(np.full(i, p)))
    den = float(copula_cdf(np.full(i - 1, p))) if i > 1 else 1.0
    if den <= 0.0:
        raise DegenerateError("conditioning probability is zero")
    return num / den


_PLAIN_ITER = 25


class _TailProbabilities:
    """Equicoordinate joint probabilities ``P(U_S <= t)`` from one sample.

    With ``smooth`` the empirical distribution of ``max_{h in S} U_h`` is
    interpolated linearly between order statistics, so probabilities, and
    hence the effective number of tests, vary continuously with the local
    level.  Otherwise plain empirical frequencies are returned.
    """

    def __init__(self, u, smooth=False):
        self.u = np.asarray(u, dtype=float)
        self.smooth = smooth
        self.n = self.u.shape[0]
        self._sorted = {}
        self._levels = np.arange(1, self.n + 1) / self.n

    def prob(self, cols, t):
        key = tuple(sorted(cols))
        if not key:
            return 1.0
        s = self._sorted.get(key)
        if s is None:
            s = np.sort(self.u[:, list(key)].max(axis=1))
            self._sorted[key] = s
        if self.smooth:
            return float(np.interp(t, s, self._levels, left=0.0, right=1.0))
        return float(np.searchsorted(s, t, side="right") / self.n)

    def gamma(self, target, given, t):
        den = self.prob(given, t)
        if den <= 0.0:
            raise DegenerateError("conditioning event has no Monte Carlo mass; increase mc_size")
        return self.prob(tuple(given) + (target,), t) / den


def _kappa(gamma, alpha_loc):
    gamma = min(gamma, 1.0)
    if gamma <= 0.0:
        return 1.0
    return min(1.0, max(0.0, math.log(gamma) / math.log1p(-alpha_loc)))


def _block_meff(tails: _TailProbabilities, block, i, alpha_loc, optimized):
    m = len(block)
    if m == 1:
        return 1.0
    if optimized and i != 2:
        raise DomainError("the optimized effective number is defined for order 2 only")
    t = 1.0 - alpha_loc
    i_eff = min(i, m)
    total = 1.0
    for ell in range(2, i_eff):                        # xi(i)
        total += _kappa(tails.gamma(block[ell - 1], block[:ell - 1], t), alpha_loc)
    for j in range(max(i_eff, 2), m + 1):              # 1-based position j
        target = block[j - 1]
        if optimized:
            g = max(tails.gamma(target, (block[k],), t) for k in range(j - 1))
        else:
            g = tails.gamma(target, block[j - i_eff:j - 1], t)
        total += _kappa(g, alpha_loc)
    return min(float(m), max(1.0, total))


def meff_block(tail_sample, block, i: int = 2, alpha_loc: float = 0.05, optimized: bool = True,
               thresholds=None) -> float:
    """Effective number of tests of one block.

    Parameters
    ----------
    tail_sample : ndarray of shape (N, M)
        Null sample on the copula (uniform) scale, or on the statistic scale
        when ``thresholds`` gives the critical values.
    block : sequence of int
        Column indices in block order.
    i : int
        Order, at least 2.
    alpha_loc : float
    optimized : bool
        Use the maximum pairwise conditional probability over predecessors.
    thresholds : array_like, optional
        Critical values ``c`` on the statistic scale.
    """
    if i < 2:
        raise DomainError("order must be at least 2")
    if not 0.0 < alpha_loc < 1.0:
        raise DomainError("alpha_loc must lie in (0, 1)")
    block = tuple(int(b) for b in block)
    if not block:
        raise DomainError("block must be nonempty")
    x = np.asarray(tail_sample, dtype=float)
    if thresholds is not None:
        c = np.broadcast_to(np.asarray(thresholds, dtype=float), (x.shape[1],))
        # map each column onto a scale where the event is x <= 1 - alpha_loc
        x = np.where(x <= c, 0.0, 1.0)
    return _block_meff(_TailProbabilities(x), block, i, alpha_loc, optimized)


def _total_meff(tails, blocks, i, a, optimized):
    return [_block_meff(tails, b, i, a, optimized) for b in blocks]


def calibrate(grouping: Grouping, marginals, model=None, alpha: float = 0.05, i: int = 2,
              optimized: bool = True, mc_size: int = 100_000, rng=None, sample=None,
              tol: float = 1e-6, max_iter: int = 100) -> Calibration:
    """Local level ``alpha_loc`` with ``1 - (1 - alpha_loc)^{M_eff} = alpha``.

    Parameters
    ----------
    grouping : Grouping
        Partition of ``0 .. M-1``; block order is used for the kappa sequence.
    marginals : MarginalNull, name, or sequence of those
        Null marginals of the statistics (one shared or one per coordinate).
    model : VineModel, optional
        Null copula of the statistics; required unless all blocks are
        singletons or ``sample`` is given.
    alpha : float
    i : int
        Order of the effective number of tests.
    optimized : bool
    mc_size : int
    rng : RngStream, Generator or seed
    sample : ndarray of shape (N, M), optional
        Precomputed copula sample (uniform scale), reused as is.

    Raises
    ------
    CalibrationError
        If the fixed-point iteration does not reach ``tol`` in ``max_iter`` steps.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    if i < 2:
        raise DomainError("order must be at least 2")
    M = grouping.M
    if not grouping.is_partition_of(M):
        raise ConfigurationError("blocks must partition 0 .. M-1")
    if isinstance(marginals, (str, MarginalNull)):
        margs = [get_marginal(marginals)] * M
    else:
        margs = [get_marginal(m) for m in marginals]
        if len(margs) != M:
            raise ConfigurationError(f"expected {M} marginals, got {len(margs)}")
    if model is not None and model.M != M:
        raise ConfigurationError(f"model has {model.M} coordinates, grouping {M}")

    blocks = grouping.blocks
    needs_mc = any(len(b) > 1 for b in blocks)
    seed = rng.seed if isinstance(rng, RngStream) else (rng if isinstance(rng, int) else None)
    tails = None
    n_used = 0
    if needs_mc:
        if sample is None:
            if model is None:
                raise ConfigurationError("a model or a sample is required for non-singleton blocks")
            n_used = int(mc_size)
            for attempt in range(3):
                stream = rng if attempt == 0 or not isinstance(rng, RngStream) else rng.substream(attempt)
                tails = _TailProbabilities(sampler.sample(model, n_used, stream), smooth=True)
                try:
                    _total_meff(tails, blocks, i, alpha, optimized)
                    break
                except DegenerateError:
                    if attempt == 2:
                        raise
                    n_used *= 2
        else:
            sample = np.asarray(sample, dtype=float)
            if sample.ndim != 2 or sample.shape[1] != M:
                raise ConfigurationError(f"sample must have {M} columns")
            tails = _TailProbabilities(sample, smooth=True)
            n_used = sample.shape[0]

    def evaluate(a):
        if tails is None:
            return [1.0] * len(blocks)
        return _total_meff(tails, blocks, i, a, optimized)

    trace = []

    def step(a):
        meffs = evaluate(a)
        total = float(sum(meffs))
        bound = 1.0 - (1.0 - a) ** total
        trace.append((a, total, bound))
        return meffs, total, bound

    # plain fixed-point iteration from alpha
    a = alpha
    converged = False
    for _ in range(min(max_iter, _PLAIN_ITER)):
        meffs, total, bound = step(a)
        if abs(bound - alpha) <= tol:
            converged = True
            break
        a = 1.0 - (1.0 - alpha) ** (1.0 / max(1.0, total))
    if not converged and tails is not None:
        # Monte Carlo noise can make the map oscillate; the bound minus alpha
        # changes sign on [full Sidak level, alpha] because 1 <= M_eff <= M.
        lo, hi = 1.0 - (1.0 - alpha) ** (1.0 / M), alpha
        f_lo, f_hi = step(lo)[2] - alpha, step(hi)[2] - alpha
        for _ in range(max_iter - len(trace)):
            if f_lo >= -tol or f_hi <= tol:
                break
            a = lo - f_lo * (hi - lo) / (f_hi - f_lo) if len(trace) % 2 else 0.5 * (lo + hi)
            if not lo < a < hi:
                a = 0.5 * (lo + hi)
            f = step(a)[2] - alpha
            if abs(f) <= tol:
                break
            if f < 0:
                lo, f_lo = a, f
            else:
                hi, f_hi = a, f
        a = min((t for t in trace), key=lambda t: abs(t[2] - alpha))[0]
        meffs, total, bound = step(a)
        converged = abs(bound - alpha) <= tol
    if not converged:
        raise CalibrationError(f"local level did not converge in {len(trace)} iterations", trace)
    it = len(trace)

    crit = tuple(float(m.quantile(1.0 - a)) for m in margs)
    return Calibration(
        alpha=float(alpha), alpha_loc=float(a), order=int(i), optimized=bool(optimized),
        critical_values=crit, blocks=blocks, block_meffs=tuple(float(m) for m in meffs),
        total_meff=total, bound=float(bound), mc_size=int(n_used), seed=seed,
        marginals=tuple(m.name for m in margs), iterations=it,
    )


def decide(t_observed, calibration: Calibration):
    """Reject ``H_j`` iff ``t_j > c_j``; the global null iff any is rejected.

    Returns
    -------
    reject : ndarray of bool, shape (M,)
    global_reject : bool
    """
    t = np.asarray(t_observed, dtype=float)
    c = np.asarray(calibration.critical_values, dtype=float)
    if t.shape != c.shape:
        raise ConfigurationError(f"expected {c.size} statistics, got {t.size}")
    reject = t > c
    return reject, bool(reject.any())
