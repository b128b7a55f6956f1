"""Inverse-Rosenblatt sampling from a (truncated) regular-vine copula."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import pair_copulas as pc
from .exceptions import DomainError, StructureError
from .numerics import RngStream
from .vine_model import VineModel, VineStructure, validate

__all__ = ["elimination_order", "sample", "sample_with_marginals"]


def elimination_order(structure: VineStructure):
    """Sampling order of the coordinates with the edge chain of each one.

    Variables are peeled off from the top tree downwards: a conditioned
    element of the single remaining top-level edge appears in exactly one
    remaining edge per level, and removing those edges leaves a valid vine on
    the other coordinates.  The reversed peel order is the sampling order.

    Returns
    -------
    list of (int, list of VineEdge)
        ``(variable, edges)`` in sampling order; ``edges[l - 1]`` is the
        level-``l`` edge linking the variable to an earlier one.
    """
    remaining = [list(level) for level in structure.trees]
    left = set(range(structure.M))
    peeled = []
    while len(left) > 1:
        top = len(left) - 1
        if len(remaining[top - 1]) != 1:
            raise StructureError("structure has no unique top edge")
        top_edge = remaining[top - 1][0]
        for v in sorted(top_edge.conditioned, reverse=True):
            chain = []
            for lev in range(top):
                hits = [e for e in remaining[lev] if v in e.conditioned]
                if len(hits) != 1:
                    break
                chain.append(hits[0])
            if len(chain) == top:
                break
        else:
            raise StructureError("structure admits no elimination order")
        for lev, e in enumerate(chain):
            remaining[lev].remove(e)
        left.remove(v)
        peeled.append((v, chain))
    peeled.append((left.pop(), []))
    return peeled[::-1]


@lru_cache(maxsize=64)
def _cached_order(structure: VineStructure):
    return elimination_order(structure)


def _order(structure):
    try:
        return _cached_order(structure)
    except TypeError:
        return elimination_order(structure)


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample(model: VineModel, N: int, rng) -> np.ndarray:
    """Draw ``N`` i.i.d. rows from the vine copula.

    Parameters
    ----------
    model : VineModel
    N : int
    rng : RngStream, numpy Generator or seed

    Returns
    -------
    ndarray of shape (N, M) with entries in (0, 1)
    """
    N = int(N)
    if N < 1:
        raise DomainError("N must be positive")
    problems = validate(model.structure)
    if problems:
        raise StructureError("; ".join(problems))
    M, K = model.M, model.K
    order = _order(model.structure)
    w = _as_generator(rng).random((N, M))
    w = np.clip(w, pc.EPS, 1.0 - pc.EPS)

    # cond[(j, D)] holds F(u_j | u_D) for the rows being built
    cond = {}
    out = np.empty((N, M))
    for pos, (v, chain) in enumerate(order):
        z = w[:, pos]
        for lev in range(min(len(chain), K), 0, -1):
            e = chain[lev - 1]
            a, b = e.conditioned
            partner = b if v == a else a
            d = frozenset(e.conditioning)
            y = cond[(partner, d)]
            if lev < K:
                cond[(v, d | {partner})] = z
            if e.copula.is_independence:
                if lev < K:
                    cond[(partner, d | {v})] = y
                continue
            if v == a:
                z = pc.h_inv(e.copula, z, y)
                if lev < K:
                    cond[(partner, d | {v})] = pc.h_transpose(e.copula, z, y)
            else:
                z = pc.h_inv(pc.transpose(e.copula), z, y)
                if lev < K:
                    cond[(partner, d | {v})] = pc.h(e.copula, y, z)
        cond[(v, frozenset())] = z
        out[:, v] = z
    return out


def sample_with_marginals(model: VineModel, marginals, N: int, rng) -> np.ndarray:
    """Vine copula sample pushed through per-column quantile functions.

    ``marginals`` is a sequence of ``M`` callables or objects with a
    ``quantile`` method.
    """
    if len(marginals) != model.M:
        raise DomainError(f"expected {model.M} marginals, got {len(marginals)}")
    u = sample(model, N, rng)
    out = np.empty_like(u)
    for j, m in enumerate(marginals):
        q = m.quantile if hasattr(m, "quantile") else m
        out[:, j] = q(u[:, j])
    return out
