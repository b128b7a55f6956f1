"""Regular-vine structures, their validation and the pair-copula log density.

Coordinates are 0-based throughout.  An edge at tree level ``i`` is
identified by its conditioned pair ``(a, b)`` and its sorted conditioning set
``D`` (``|D| = i - 1``); its pair copula links ``F(a | D)`` (first argument)
and ``F(b | D)`` (second argument).  At levels >= 2 the two nodes joined by
an edge are the level ``i - 1`` edges whose complete unions are
``{a} | D`` and ``{b} | D``, so the proximity condition holds by
construction whenever those parents exist.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import pair_copulas as pc
from .exceptions import StructureError
from .pair_copulas import INDEPENDENCE, PairCopulaSpec

__all__ = [
    "VineEdge",
    "VineStructure",
    "VineModel",
    "complete_union",
    "validate",
    "log_density",
    "is_dvine",
    "is_cvine",
]


@dataclass(frozen=True)
class VineEdge:
    level: int
    conditioned: tuple
    conditioning: tuple = ()
    copula: PairCopulaSpec = INDEPENDENCE

    def __post_init__(self):
        object.__setattr__(self, "conditioned", tuple(int(x) for x in self.conditioned))
        object.__setattr__(self, "conditioning", tuple(sorted(int(x) for x in self.conditioning)))

    @property
    def key(self):
        """Orientation-free identity ``(sorted conditioned, conditioning)``."""
        return tuple(sorted(self.conditioned)), self.conditioning

    @property
    def union(self) -> frozenset:
        return frozenset(self.conditioned) | frozenset(self.conditioning)

    @property
    def label(self) -> str:
        a, b = self.conditioned
        if not self.conditioning:
            return f"{a},{b}"
        return f"{a},{b}|" + ",".join(str(d) for d in self.conditioning)

    def with_copula(self, copula) -> "VineEdge":
        return VineEdge(self.level, self.conditioned, self.conditioning, copula)

    def to_dict(self) -> dict:
        return {
            "conditioned": list(self.conditioned),
            "conditioning": list(self.conditioning),
            "copula": self.copula.to_dict(),
        }


@dataclass(frozen=True)
class VineStructure:
    """Trees ``E_1 .. E_{M-1}`` of a vine on ``M`` coordinates.

    ``trees[i - 1]`` holds the edges of tree ``i``.  Levels above the
    truncation level ``K`` must carry the independence copula.
    """

    M: int
    trees: tuple
    K: int = None
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        trees = tuple(tuple(level) for level in self.trees)
        object.__setattr__(self, "trees", trees)
        if self.K is None:
            object.__setattr__(self, "K", max(1, self.M - 1))
        index = {}
        for level in trees:
            for e in level:
                index.setdefault(e.key, e)
        object.__setattr__(self, "_index", index)

    def edges(self):
        for level in self.trees:
            yield from level

    def edge(self, conditioned, conditioning=()):
        key = (tuple(sorted(conditioned)), tuple(sorted(conditioning)))
        try:
            return self._index[key]
        except KeyError:
            raise LookupError(f"no edge {key} in structure") from None

    def __contains__(self, edge):
        return isinstance(edge, VineEdge) and self._index.get(edge.key) is not None

    def level_edges(self, level):
        return self.trees[level - 1] if 1 <= level <= len(self.trees) else ()

    def parents(self, edge):
        """The two level ``i - 1`` edges joined by ``edge`` (``i >= 2``)."""
        a, b = edge.conditioned
        d = frozenset(edge.conditioning)
        prev = {e.union: e for e in self.level_edges(edge.level - 1)}
        try:
            return prev[d | {a}], prev[d | {b}]
        except KeyError:
            raise StructureError(f"edge {edge.label} has no parent nodes") from None

    def tree1_adjacency(self):
        adj = {j: set() for j in range(self.M)}
        for e in self.level_edges(1):
            a, b = e.conditioned
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "K": self.K,
            "trees": [[e.to_dict() for e in level] for level in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "VineStructure":
        trees = []
        for i, level in enumerate(d["trees"], start=1):
            trees.append([
                VineEdge(i, tuple(e["conditioned"]), tuple(e.get("conditioning", ())),
                         PairCopulaSpec.from_dict(e["copula"]) if "copula" in e else INDEPENDENCE)
                for e in level
            ])
        return cls(int(d["M"]), trees, int(d["K"]) if d.get("K") is not None else None)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        self.parent[max(rx, ry)] = min(rx, ry)
        return True


def complete_union(structure: VineStructure, edge: VineEdge) -> frozenset:
    """Tree-1 nodes reachable from ``edge`` by descending through the trees."""
    if edge not in structure:
        raise LookupError(f"edge {edge.label} not in structure")
    if edge.level == 1:
        return frozenset(edge.conditioned)
    left, right = structure.parents(edge)
    return complete_union(structure, left) | complete_union(structure, right)


def validate(structure: VineStructure) -> list:
    """List every violated regular-vine condition (empty list means valid)."""
    problems = []
    M = structure.M
    if M < 2:
        return ["M must be at least 2"]
    if len(structure.trees) != M - 1:
        problems.append(f"expected {M - 1} trees, found {len(structure.trees)}")
    if not 1 <= structure.K <= M - 1:
        problems.append(f"truncation level {structure.K} outside [1, {M - 1}]")

    for i, level in enumerate(structure.trees, start=1):
        if len(level) != M - i:
            problems.append(f"tree {i}: expected {M - i} edges, found {len(level)}")
        keys = [e.key for e in level]
        if len(set(keys)) != len(keys):
            problems.append(f"tree {i}: duplicate edges")
        for e in level:
            if e.level != i:
                problems.append(f"tree {i}: edge {e.label} tagged with level {e.level}")
            a, b = e.conditioned if len(e.conditioned) == 2 else (None, None)
            if len(e.conditioned) != 2 or a == b:
                problems.append(f"tree {i}: edge {e.label} needs two distinct conditioned indices")
                continue
            if len(e.conditioning) != i - 1:
                problems.append(f"tree {i}: edge {e.label} has conditioning set of size "
                                f"{len(e.conditioning)}, expected {i - 1}")
            if set(e.conditioned) & set(e.conditioning):
                problems.append(f"tree {i}: edge {e.label} conditioned and conditioning sets overlap")
            if not all(0 <= x < M for x in e.union):
                problems.append(f"tree {i}: edge {e.label} references a coordinate outside 0..{M - 1}")
            if i > structure.K and not e.copula.is_independence:
                problems.append(f"tree {i}: edge {e.label} above truncation level carries "
                                f"{e.copula.family.value} copula")

        if i == 1:
            uf = _UnionFind(range(M))
            for e in level:
                if len(e.conditioned) == 2 and all(0 <= x < M for x in e.conditioned):
                    if not uf.union(*e.conditioned):
                        problems.append("tree 1 not acyclic")
                        break
            roots = {uf.find(x) for x in range(M)}
            if len(roots) > 1:
                problems.append("tree 1 not connected")
            continue

        prev = {e.union: k for k, e in enumerate(structure.trees[i - 2])}
        uf = _UnionFind(range(len(structure.trees[i - 2])))
        cyclic = False
        for e in level:
            if len(e.conditioned) != 2:
                continue
            d = frozenset(e.conditioning)
            a, b = e.conditioned
            pa, pb = prev.get(d | {a}), prev.get(d | {b})
            if pa is None or pb is None:
                problems.append(f"tree {i}: edge {e.label} violates the proximity condition")
                continue
            if not uf.union(pa, pb):
                cyclic = True
        if cyclic:
            problems.append(f"tree {i} not acyclic")
        elif len(level) == M - i and not problems:
            roots = {uf.find(x) for x in range(len(structure.trees[i - 2]))}
            if len(roots) > 1:
                problems.append(f"tree {i} not connected")
    return problems


def is_dvine(structure: VineStructure) -> bool:
    """All tree-1 nodes have degree at most two."""
    deg = np.zeros(structure.M, dtype=int)
    for e in structure.level_edges(1):
        deg[list(e.conditioned)] += 1
    return bool(deg.max() <= 2)


def is_cvine(structure: VineStructure) -> bool:
    """Every tree ``i`` has a node of degree ``M - i``."""
    M = structure.M
    for i, level in enumerate(structure.trees, start=1):
        if i == 1:
            deg = {}
            for e in level:
                for x in e.conditioned:
                    deg[x] = deg.get(x, 0) + 1
        else:
            deg = {}
            for e in level:
                for p in structure.parents(e):
                    deg[p.key] = deg.get(p.key, 0) + 1
        if max(deg.values(), default=0) != M - i:
            return False
    return True


class VineModel:
    """A regular-vine copula: validated structure plus cached Kendall's taus.

    Parameters
    ----------
    structure : VineStructure
    fit_report : dict, optional
        Per-edge diagnostics from estimation, keyed by :attr:`VineEdge.key`.
    """

    def __init__(self, structure: VineStructure, fit_report=None, check=True):
        if check:
            problems = validate(structure)
            if problems:
                raise StructureError("; ".join(problems))
        self.structure = structure
        self.fit_report = dict(fit_report or {})
        self.taus = {e.key: pc.tau_of(e.copula) for e in structure.edges()}

    @property
    def M(self):
        return self.structure.M

    @property
    def K(self):
        return self.structure.K

    def tau(self, conditioned, conditioning=()):
        """Model-implied Kendall's tau of an edge, 0 if the edge does not exist."""
        key = (tuple(sorted(conditioned)), tuple(sorted(conditioning)))
        return self.taus.get(key, 0.0)

    def log_density(self, u):
        return log_density(self, u)

    def to_dict(self) -> dict:
        return self.structure.to_dict()

    def to_json(self, path=None, indent=2):
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d) -> "VineModel":
        return cls(VineStructure.from_dict(d))

    @classmethod
    def from_json(cls, path_or_text) -> "VineModel":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def summary(self) -> str:
        lines = [f"regular vine on {self.M} coordinates, truncation level {self.K}"]
        for i in range(1, min(self.K, self.M - 1) + 1):
            lines.append(f"tree {i}:")
            for e in self.structure.level_edges(i):
                lines.append(f"  {e.label:<14} {str(e.copula):<22} tau={self.taus[e.key]: .4f}")
        return "\n".join(lines)


def log_density(model: VineModel, u):
    """Copula log density of the truncated pair-copula construction.

    Only tree levels ``1..K`` contribute; conditional arguments are built
    recursively with h-functions.  Accepts one point ``(M,)`` or ``(n, M)``.
    """
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    if u.shape[1] != model.M:
        raise ValueError(f"expected {model.M} columns, got {u.shape[1]}")
    u = np.clip(u, pc.EPS, 1.0 - pc.EPS)
    cond = {(j, frozenset()): u[:, j] for j in range(model.M)}
    total = np.zeros(u.shape[0])
    K = model.K
    for level in range(1, K + 1):
        for e in model.structure.level_edges(level):
            a, b = e.conditioned
            d = frozenset(e.conditioning)
            x, y = cond[(a, d)], cond[(b, d)]
            if e.copula.is_independence:
                if level < K:
                    cond[(a, d | {b})], cond[(b, d | {a})] = x, y
                continue
            total += pc.logpdf(e.copula, x, y)
            if level < K:
                cond[(a, d | {b})] = pc.h(e.copula, x, y)
                cond[(b, d | {a})] = pc.h_transpose(e.copula, x, y)
    return float(total[0]) if single else total
