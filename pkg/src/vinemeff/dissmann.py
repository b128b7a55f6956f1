"""Sequential vine structure selection with per-edge family fitting.

Tree 1 is the maximum spanning tree on the coordinates under ``|tau|``;
every further tree up to the truncation level ``K`` is the maximum spanning
tree over the edges of the previous one, restricted to pairs that share a
node, weighted by ``|tau|`` of the conditional pseudo-observations.  Trees
above ``K`` are completed with independence copulas.
"""
from __future__ import annotations

import csv
import io

import numpy as np
from scipy import stats

from . import pair_copulas as pc
from .exceptions import DegenerateError, DomainError, StructureError
from .pair_copulas import ALL_CANDIDATES, Family, INDEPENDENCE
from .vine_model import VineEdge, VineModel, VineStructure, _UnionFind

__all__ = [
    "pseudo_obs",
    "kendall_tau_empirical",
    "conditional_pseudo_obs",
    "parse_candidates",
    "select_structure",
    "edge_report",
    "edge_report_csv",
]


def pseudo_obs(x, min_n: int = 10):
    """Column-wise ranks divided by ``n + 1`` (average ranks for ties).

    ``min_n`` guards against rank transforms of tiny samples; lower it only
    for hand-checked examples.

    Examples
    --------
    >>> pseudo_obs([[3.0], [1.0], [2.0]], min_n=3)[:, 0].tolist()
    [0.75, 0.25, 0.5]
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DomainError("x must be a 2-d array")
    n = x.shape[0]
    if n < min_n:
        raise DomainError(f"need at least {min_n} observations")
    if not np.all(np.isfinite(x)):
        raise DomainError("x contains non-finite values")
    const = np.flatnonzero(np.all(x == x[0], axis=0))
    if const.size:
        err = DegenerateError(f"column {int(const[0])} is constant")
        err.column = int(const[0])
        raise err
    return stats.rankdata(x, method="average", axis=0) / (n + 1.0)


def kendall_tau_empirical(u, v) -> float:
    """Tie-adjusted Kendall's tau (tau-b), O(n log n)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise DomainError("need two 1-d vectors of equal length >= 2")
    if np.all(u == u[0]) or np.all(v == v[0]):
        raise DegenerateError("Kendall's tau undefined for a constant vector")
    return float(stats.kendalltau(u, v).statistic)


def conditional_pseudo_obs(edge: VineEdge, u_left, u_right):
    """``(h(u_a | u_b), h(u_b | u_a))`` for the fitted copula on ``edge``."""
    cop = edge.copula
    if cop.is_independence:
        return np.asarray(u_left, dtype=float), np.asarray(u_right, dtype=float)
    return pc.h(cop, u_left, u_right), pc.h_transpose(cop, u_left, u_right)


def parse_candidates(families):
    """Turn family names and/or ``(family, rotation)`` pairs into candidates.

    A bare family name admits all of its rotations.  Independence is always
    included.  ``None`` means every supported family.
    """
    if families is None:
        return ALL_CANDIDATES
    if isinstance(families, str):
        families = [f for f in families.split(",") if f.strip()]
    out = {(Family.INDEPENDENCE, 0)}
    for item in families:
        if isinstance(item, str):
            try:
                fam = Family(item.strip().lower())
            except ValueError:
                raise DomainError(f"unknown copula family {item!r}") from None
            out.update(c for c in ALL_CANDIDATES if c[0] is fam)
        else:
            fam, rot = item
            out.add((Family(fam), int(rot)))
    return tuple(c for c in ALL_CANDIDATES if c in out)


def _kruskal(n_nodes, weighted_pairs):
    """Maximum spanning tree; ``weighted_pairs`` are ``(weight, id, i, j)``."""
    uf = _UnionFind(range(n_nodes))
    chosen = []
    for w, eid, i, j in sorted(weighted_pairs, key=lambda t: (-t[0], t[1])):
        if uf.union(i, j):
            chosen.append((eid, i, j))
            if len(chosen) == n_nodes - 1:
                break
    if len(chosen) != n_nodes - 1:
        raise StructureError("admissible edges do not span the tree level")
    return chosen


def _node_sets(structure_levels, level):
    """Sets of lower-level nodes touched by each edge of ``level``."""
    edges = structure_levels[level - 1]
    if level == 1:
        return [frozenset(e.conditioned) for e in edges]
    prev = {e.union: e.key for e in structure_levels[level - 2]}
    out = []
    for e in edges:
        a, b = e.conditioned
        d = frozenset(e.conditioning)
        out.append(frozenset({prev[d | {a}], prev[d | {b}]}))
    return out


def _admissible(levels, level):
    """Candidate edges of tree ``level`` built from pairs sharing a node."""
    prev = levels[level - 2]
    nodes = _node_sets(levels, level - 1)
    cands = []
    for p in range(len(prev)):
        for q in range(p + 1, len(prev)):
            if not nodes[p] & nodes[q]:
                continue
            up, uq = prev[p].union, prev[q].union
            d = tuple(sorted(up & uq))
            a, b = sorted((next(iter(up - uq)), next(iter(uq - up))))
            cands.append(((a, b), d, p, q))
    return cands


def select_structure(u, K: int = 2, candidates=None) -> VineModel:
    """Select and fit a vine truncated at level ``K``.

    Parameters
    ----------
    u : ndarray of shape (n, M)
        Pseudo-observations.
    K : int
        Truncation level, ``1 <= K <= M - 1``.
    candidates : iterable of (Family, rotation), optional
        Admissible pair-copula families. Defaults to all.

    Returns
    -------
    VineModel
        With ``fit_report[edge.key] = {"tau_empirical", "loglik", "aic"}``
        for every fitted edge.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise DomainError("u must be a 2-d array")
    n, M = u.shape
    if M < 2:
        raise DomainError("need at least two coordinates")
    if not 1 <= K <= M - 1:
        raise DomainError(f"truncation level must lie in [1, {M - 1}]")
    cands = parse_candidates(candidates) if candidates is not None else ALL_CANDIDATES

    report = {}
    cond = {(j, frozenset()): u[:, j] for j in range(M)}
    levels = []

    def fit_edges(chosen, taus):
        edges = []
        for (conditioned, conditioning), tau_hat in zip(chosen, taus):
            a, b = conditioned
            d = frozenset(conditioning)
            x, y = cond[(a, d)], cond[(b, d)]
            fit = pc.fit_pair(x, y, cands, tau_hat=tau_hat)
            e = VineEdge(len(levels) + 1, conditioned, conditioning, fit.spec)
            report[e.key] = {"tau_empirical": tau_hat, "loglik": fit.loglik, "aic": fit.aic}
            if len(levels) + 1 < K:
                cond[(a, d | {b})], cond[(b, d | {a})] = conditional_pseudo_obs(e, x, y)
            edges.append(e)
        return edges

    # tree 1
    pairs, tau1 = [], {}
    for i in range(M):
        for j in range(i + 1, M):
            t = kendall_tau_empirical(u[:, i], u[:, j])
            tau1[(i, j)] = t
            pairs.append((abs(t), (i, j), i, j))
    chosen = _kruskal(M, pairs)
    levels.append(fit_edges([((i, j), ()) for _, i, j in chosen], [tau1[(i, j)] for _, i, j in chosen]))

    # fitted trees 2..K
    for level in range(2, K + 1):
        cands_l = _admissible(levels, level)
        weighted, tau_l = [], {}
        for conditioned, d, p, q in cands_l:
            a, b = conditioned
            df = frozenset(d)
            t = kendall_tau_empirical(cond[(a, df)], cond[(b, df)])
            tau_l[(conditioned, d)] = t
            weighted.append((abs(t), (conditioned, d), p, q))
        chosen = _kruskal(len(levels[-1]), weighted)
        ids = [eid for eid, _, _ in chosen]
        levels.append(fit_edges(ids, [tau_l[eid] for eid in ids]))

    # independence completion above K
    for level in range(K + 1, M):
        cands_l = _admissible(levels, level)
        chosen = _kruskal(len(levels[-1]), [(0.0, (c, d), p, q) for c, d, p, q in cands_l])
        levels.append([VineEdge(level, c, d, INDEPENDENCE) for (c, d), _, _ in chosen])

    return VineModel(VineStructure(M, levels, K), fit_report=report)


def edge_report(model: VineModel):
    """Per-edge rows for the fitted trees (levels ``1..K``)."""
    rows = []
    for level in range(1, model.K + 1):
        for e in model.structure.level_edges(level):
            info = model.fit_report.get(e.key, {})
            rows.append({
                "level": level,
                "edge": e.label,
                "family": e.copula.family.value,
                "rotation": e.copula.rotation,
                "theta": "" if e.copula.theta is None else repr(float(e.copula.theta)),
                "tau_empirical": repr(float(info["tau_empirical"])) if "tau_empirical" in info else "",
                "tau_model": repr(float(model.taus[e.key])),
                "aic": repr(float(info["aic"])) if "aic" in info else "",
            })
    return rows


def edge_report_csv(model: VineModel, path=None) -> str:
    rows = edge_report(model)
    buf = io.StringIO()
    fields = ["level", "edge", "family", "rotation", "theta", "tau_empirical", "tau_model", "aic"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
