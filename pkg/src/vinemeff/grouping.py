"""Greedy partition of the coordinates into blocks of strong inner dependence.

Blocks are grown along tree 1 of a fitted vine.  A candidate neighbor ``n``
of the current block is attached through its unique tree-1 neighbor
``g(n)`` inside the block and scored by

    |tau(n, g)| + sum over block members i adjacent to g of |tau(n, i | g)|,

with model-implied taus; conditional terms exist only for tree-2 edges.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, DomainError
from .numerics import RngStream
from .vine_model import VineModel

__all__ = ["Grouping", "neighbor_score", "greedy_grouping", "fixed_grouping", "singleton_grouping"]


@dataclass(frozen=True)
class Grouping:
    """Ordered blocks of coordinate indices, each in insertion order."""

    blocks: tuple
    target_size: int
    leftovers_assigned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(x) for x in b) for b in self.blocks))
        seen = [x for b in self.blocks for x in b]
        if len(seen) != len(set(seen)):
            raise DomainError("blocks overlap")

    @property
    def B(self):
        return len(self.blocks)

    @property
    def M(self):
        return sum(len(b) for b in self.blocks)

    def is_partition_of(self, M: int) -> bool:
        return sorted(x for b in self.blocks for x in b) == list(range(M))

    def as_sets(self):
        return [frozenset(b) for b in self.blocks]

    def to_dict(self) -> dict:
        return {
            "blocks": [list(b) for b in self.blocks],
            "target_size": self.target_size,
            "leftovers_assigned": self.leftovers_assigned,
        }

    @classmethod
    def from_dict(cls, d) -> "Grouping":
        return cls(tuple(tuple(b) for b in d["blocks"]), int(d["target_size"]),
                   bool(d.get("leftovers_assigned", False)))

    def to_json(self, path=None, indent=2) -> str:
        text = json.dumps(self.to_dict(), indent=indent)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, path_or_text) -> "Grouping":
        text = str(path_or_text)
        if not text.lstrip().startswith("{"):
            with open(path_or_text, encoding="utf-8") as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def report(self, model: VineModel = None) -> str:
        lines = []
        for k, b in enumerate(self.blocks, start=1):
            line = f"block {k}: " + ",".join(str(x) for x in b)
            if model is not None and len(b) > 1:
                taus = [abs(model.tau((p, q))) for i, p in enumerate(b) for q in b[i + 1:]
                        if model.tau((p, q)) != 0.0]
                if taus:
                    line += f"  (tree-1 |tau| mean {np.mean(taus):.3f}, min {min(taus):.3f})"
            lines.append(line)
        return "\n".join(lines)


def fixed_grouping(blocks) -> Grouping:
    blocks = tuple(tuple(b) for b in blocks)
    return Grouping(blocks, max(len(b) for b in blocks))


def singleton_grouping(M: int) -> Grouping:
    return Grouping(tuple((j,) for j in range(M)), 1)


def _attachment(adj, n, group):
    hits = [g for g in group if g in adj[n]]
    if len(hits) != 1:
        raise DomainError(f"node {n} must be adjacent to exactly one block member in tree 1")
    return hits[0]


def neighbor_score(model: VineModel, n: int, group) -> float:
    """Dependence of candidate ``n`` with ``group`` through tree 1 and tree 2."""
    adj = model.structure.tree1_adjacency()
    g = _attachment(adj, n, group)
    score = abs(model.tau((n, g)))
    for i in group:
        if i != g and i in adj[g]:
            score += abs(model.tau((n, i), (g,)))
    return score


def _as_generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def greedy_grouping(model: VineModel, B: int, target_size: int = None, rng=None,
                    deterministic_fill: bool = False) -> Grouping:
    """Grow ``B`` blocks greedily along tree 1 of ``model``.

    Parameters
    ----------
    model : VineModel
    B : int
        Number of blocks.
    target_size : int, optional
        Defaults to ``M // B``.
    rng : RngStream, Generator or seed, optional
        Drives the random assignment of leftover coordinates.
    deterministic_fill : bool
        Assign leftovers in ascending index order to the first open block.

    Returns
    -------
    Grouping
        Leftovers go to blocks below ``target_size``; when ``B`` does not
        divide ``M`` the remaining ones go to blocks below ``ceil(M / B)``.
    """
    M = model.M
    if B < 1:
        raise ConfigurationError("B must be at least 1")
    if B > M:
        raise ConfigurationError(f"B = {B} exceeds the number of coordinates {M}")
    if target_size is None:
        target_size = M // B
    if target_size < 1 or B * target_size > M:
        raise ConfigurationError(f"target size {target_size} infeasible for M = {M}, B = {B}")

    adj = model.structure.tree1_adjacency()
    tree1 = [tuple(sorted(e.conditioned)) for e in model.structure.level_edges(1)]
    assigned = set()
    blocks = [[] for _ in range(B)]

    for block in blocks:
        if target_size < 2:
            break
        seeds = [(a, b) for a, b in tree1 if a not in assigned and b not in assigned]
        if not seeds:
            break
        a, b = min(seeds, key=lambda e: (-abs(model.tau(e)), e))
        block.extend((a, b))
        assigned.update((a, b))
        while len(block) < target_size:
            nbrs = sorted({n for g in block for n in adj[g]} - assigned)
            if not nbrs:
                break
            best = max(nbrs, key=lambda n: (neighbor_score(model, n, block), -n))
            block.append(best)
            assigned.add(best)

    left = [j for j in range(M) if j not in assigned]
    leftovers = bool(left)
    if left:
        gen = None if deterministic_fill else _as_generator(0 if rng is None else rng)
        if gen is not None:
            left = [left[k] for k in gen.permutation(len(left))]
        for cap in (target_size, math.ceil(M / B)):
            rest = []
            for n in left:
                open_blocks = [k for k in range(B) if len(blocks[k]) < cap]
                if not open_blocks:
                    rest.append(n)
                    continue
                k = open_blocks[0] if gen is None else open_blocks[int(gen.integers(len(open_blocks)))]
                blocks[k].append(n)
            left = rest
        if left:
            raise ConfigurationError("leftover coordinates could not be assigned")

    return Grouping(tuple(tuple(b) for b in blocks if b), target_size, leftovers)
