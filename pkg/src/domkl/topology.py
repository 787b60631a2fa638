"""Undirected learner graphs.

Learners are numbered 1..J in the public API, matching how networks are
usually written down. ``adjacency`` gives the 0-based view used by the
simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ConfigurationError, InputError

PRESETS = ("complete", "ring", "path", "star")


@dataclass(frozen=True)
class Topology:
    num_learners: int
    edges: frozenset

    def __init__(self, num_learners: int, edges: Iterable):
        if int(num_learners) != num_learners or num_learners < 1:
            raise ConfigurationError(f"number of learners must be >= 1, got {num_learners!r}")
        num_learners = int(num_learners)
        canon = set()
        for edge in edges:
            i, j = (int(v) for v in edge)
            if i == j:
                raise ConfigurationError(f"self-loop on learner {i}")
            for v in (i, j):
                if not 1 <= v <= num_learners:
                    raise ConfigurationError(f"edge {tuple(edge)} references learner {v} outside 1..{num_learners}")
            pair = (min(i, j), max(i, j))
            if pair in canon:
                raise ConfigurationError(f"duplicate edge {pair}")
            canon.add(pair)
        object.__setattr__(self, "num_learners", num_learners)
        object.__setattr__(self, "edges", frozenset(canon))

        nbrs = [[] for _ in range(num_learners)]
        for i, j in sorted(canon):
            nbrs[i - 1].append(j - 1)
            nbrs[j - 1].append(i - 1)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(n)) for n in nbrs))
        if not self._connected():
            raise ConfigurationError("learner graph is not connected")

    def _connected(self) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            for w in self._adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_learners

    def neighbors(self, j: int) -> set:
        if int(j) != j or not 1 <= j <= self.num_learners:
            raise InputError(f"learner index {j!r} outside 1..{self.num_learners}")
        return {i + 1 for i in self._adj[int(j) - 1]}

    def adjacency(self) -> tuple:
        """Sorted 0-based neighbor tuples, one per learner."""
        return self._adj

    def degree(self, j: int) -> int:
        return len(self.neighbors(j))

    def is_acyclic(self) -> bool:
        # connected graph: tree iff |E| = J - 1
        return len(self.edges) == self.num_learners - 1

    def edge_list(self) -> list:
        return [list(e) for e in sorted(self.edges)]


def neighbors(topo: Topology, j: int) -> set:
    return topo.neighbors(j)


def is_acyclic(topo: Topology) -> bool:
    return topo.is_acyclic()


def preset(name: str, J: int) -> Topology:
    if int(J) != J or J < 2:
        raise ConfigurationError(f"preset topologies need at least 2 learners, got {J!r}")
    J = int(J)
    if name == "complete":
        edges = [(i, j) for i in range(1, J + 1) for j in range(i + 1, J + 1)]
    elif name == "path":
        edges = [(i, i + 1) for i in range(1, J)]
    elif name == "ring":
        edges = [(i, i + 1) for i in range(1, J)]
        if J > 2:
            edges.append((J, 1))
    elif name == "star":
        edges = [(1, j) for j in range(2, J + 1)]
    else:
        raise ConfigurationError(f"unknown topology preset {name!r}; choose from {', '.join(PRESETS)}")
    return Topology(J, edges)


def single_learner() -> Topology:
    return Topology(1, [])
