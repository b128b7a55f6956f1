"""scikit-learn style wrappers around the vine fit and the block-wise test."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import sampler
from .dissmann import parse_candidates, pseudo_obs, select_structure
from .exceptions import ConfigurationError, DomainError
from .grouping import greedy_grouping
from .meff import calibrate, decide
from .numerics import RngStream
from .vine_model import log_density

__all__ = ["VineCopula", "BlockMeffTest", "check_data", "check_unit_cube"]


def check_data(X, min_rows=10):
    """Finite 2-d float array with at least ``min_rows`` rows."""
    X = check_array(X, dtype=float, ensure_min_samples=min_rows, ensure_min_features=2)
    return X


def check_unit_cube(U):
    U = check_array(U, dtype=float, ensure_min_samples=1)
    if np.any((U <= 0.0) | (U >= 1.0)):
        raise DomainError("entries must lie strictly inside (0, 1)")
    return U


def _stream(random_state):
    if isinstance(random_state, RngStream):
        return random_state
    if random_state is None:
        return RngStream(42)
    return RngStream(int(random_state))


class VineCopula(BaseEstimator):
    """Truncated regular-vine copula fitted by sequential tree selection.

    Parameters
    ----------
    trunc_level : int, default=2
        Number of fitted trees; higher trees are independence.
    families : list of str, optional
        Admissible pair-copula families (all rotations of each). Defaults to
        independence, Gaussian, Clayton, Gumbel, Frank and Joe.

    Attributes
    ----------
    model_ : VineModel
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> rng = np.random.default_rng(0)
    >>> z = rng.standard_normal((200, 1))
    >>> X = np.hstack([z + 0.3 * rng.standard_normal((200, 1)) for _ in range(3)])
    >>> vc = VineCopula(trunc_level=1).fit(X)
    >>> vc.sample(5, random_state=1).shape
    (5, 3)
    """

    def __init__(self, trunc_level=2, families=None):
        self.trunc_level = trunc_level
        self.families = families

    def fit(self, X, y=None):
        X = check_data(X)
        M = X.shape[1]
        if not 1 <= self.trunc_level <= M - 1:
            raise ConfigurationError(f"trunc_level must lie in [1, {M - 1}]")
        cands = None if self.families is None else parse_candidates(self.families)
        self.model_ = select_structure(pseudo_obs(X), self.trunc_level, cands)
        self.n_features_in_ = M
        return self

    def transform(self, X):
        """Pseudo-observations of ``X`` (column ranks over ``n + 1``)."""
        check_is_fitted(self, "model_")
        return pseudo_obs(check_data(X))

    def score_samples(self, U):
        """Copula log density at points of the unit cube."""
        check_is_fitted(self, "model_")
        return log_density(self.model_, check_unit_cube(U))

    def sample(self, n_samples=1, random_state=None):
        check_is_fitted(self, "model_")
        return sampler.sample(self.model_, n_samples, _stream(random_state))


class BlockMeffTest(BaseEstimator):
    """Multiple test with block-wise effective numbers of tests.

    ``fit`` estimates the copula of the data, groups the coordinates into
    ``n_blocks`` blocks and calibrates common critical values so that the
    Sidak-type bound with the summed block effective numbers equals
    ``alpha``.  ``predict`` applies the strict rule ``t_j > c_j``.

    Parameters
    ----------
    n_blocks : int, default=3
    trunc_level : int, default=2
    alpha : float, default=0.05
    order : int, default=2
    optimized : bool, default=True
    mc_size : int, default=100000
    marginal : {"std_normal", "half_normal"}, default="std_normal"
        Null distribution of every statistic.
    families : list of str, optional
    deterministic_fill : bool, default=False
    random_state : int, default=42

    Attributes
    ----------
    model_ : VineModel
    grouping_ : Grouping
    calibration_ : Calibration
    critical_values_ : ndarray
    """

    def __init__(self, n_blocks=3, trunc_level=2, alpha=0.05, order=2, optimized=True,
                 mc_size=100_000, marginal="std_normal", families=None,
                 deterministic_fill=False, random_state=42):
        self.n_blocks = n_blocks
        self.trunc_level = trunc_level
        self.alpha = alpha
        self.order = order
        self.optimized = optimized
        self.mc_size = mc_size
        self.marginal = marginal
        self.families = families
        self.deterministic_fill = deterministic_fill
        self.random_state = random_state

    def fit(self, X, y=None):
        vc = VineCopula(self.trunc_level, self.families).fit(X)
        stream = _stream(self.random_state)
        self.model_ = vc.model_
        self.grouping_ = greedy_grouping(self.model_, self.n_blocks, rng=stream.substream(2),
                                         deterministic_fill=self.deterministic_fill)
        self.calibration_ = calibrate(self.grouping_, self.marginal, self.model_, self.alpha,
                                      self.order, self.optimized, self.mc_size, stream.substream(1))
        self.critical_values_ = np.asarray(self.calibration_.critical_values)
        self.n_features_in_ = vc.n_features_in_
        return self

    def predict(self, T):
        """Rejection indicators for one vector or a matrix of statistics."""
        check_is_fitted(self, "calibration_")
        T = np.asarray(T, dtype=float)
        single = T.ndim == 1
        T = np.atleast_2d(T)
        out = np.array([decide(t, self.calibration_)[0] for t in T])
        return out[0] if single else out

    def predict_global(self, T):
        rej = np.atleast_2d(self.predict(T))
        g = rej.any(axis=1)
        return bool(g[0]) if np.asarray(T).ndim == 1 else g
