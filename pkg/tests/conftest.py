import numpy as np
import pytest

from vinemeff.pair_copulas import INDEPENDENCE, Family, PairCopulaSpec
from vinemeff.vine_model import VineEdge, VineModel, VineStructure


def dvine(path, copulas=None, K=None):
    """D-vine on ``path`` with copulas keyed by ``(sorted pair, conditioning)``."""
    copulas = copulas or {}
    M = len(path)
    trees = []
    for level in range(1, M):
        edges = []
        for k in range(M - level):
            pair = tuple(sorted((path[k], path[k + level])))
            cond = tuple(sorted(path[k + 1:k + level]))
            edges.append(VineEdge(level, pair, cond, copulas.get((pair, cond), INDEPENDENCE)))
        trees.append(edges)
    return VineModel(VineStructure(M, trees, K if K is not None else M - 1))


def cvine(order, copulas=None, K=None):
    """C-vine whose level-i root is ``order[i - 1]``."""
    copulas = copulas or {}
    M = len(order)
    trees = []
    for level in range(1, M):
        root = order[level - 1]
        cond = tuple(sorted(order[:level - 1]))
        edges = []
        for other in order[level:]:
            pair = tuple(sorted((root, other)))
            edges.append(VineEdge(level, pair, cond, copulas.get((pair, cond), INDEPENDENCE)))
        trees.append(edges)
    return VineModel(VineStructure(M, trees, K if K is not None else M - 1))


@pytest.fixture
def clayton3_chain():
    cop = {((j, j + 1), ()): PairCopulaSpec(Family.CLAYTON, 0, 3.0) for j in range(3)}
    return dvine([0, 1, 2, 3], cop, K=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tau_standard_error(spec, u, v):
    """Monte Carlo standard error of Kendall's tau under the pair copula ``spec``.

    Uses the Hoeffding projection 4 C(u, v) - 2u - 2v + 1 of the tau
    U-statistic, evaluated with the true copula cdf.
    """
    from vinemeff import pair_copulas as pc
    proj = 4.0 * pc.cdf(spec, u, v) - 2.0 * u - 2.0 * v + 1.0
    return 2.0 * proj.std() / np.sqrt(len(u))


def partial_corr(R, a, b, D):
    S = [a, b, *D]
    P = np.linalg.inv(R[np.ix_(S, S)])
    return -P[0, 1] / np.sqrt(P[0, 0] * P[1, 1])


def gaussian_vine(builder, order, R, K=None):
    """Vine whose pair copulas are Gaussian with the partial correlations of ``R``."""
    skeleton = builder(order)
    cops = {e.key: PairCopulaSpec(Family.GAUSSIAN, 0, partial_corr(R, *e.conditioned, e.conditioning))
            for e in skeleton.structure.edges()}
    return builder(order, cops, K)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
