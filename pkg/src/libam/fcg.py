"""Call-graph primitives: reachability, anchor areas, induced subgraphs.

Graphs are immutable after construction and safe to query concurrently.
Descendant sets are memoized per graph, which keeps repeated alignment
queries on the same call graph cheap.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .interchange import BinaryRecord


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class Area:
    """An anchor function plus everything reachable from it on the FCG.

    ``members`` is deterministic: anchor first, then breadth-first order
    with ties broken by node id.
    """

    anchor: str
    members: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    def member_set(self) -> frozenset[str]:
        return frozenset(self.members)


class Fcg:
    """Directed caller-to-callee graph; cycles and self-loops allowed."""

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]]):
        self._nodes = frozenset(nodes)
        succ: dict[str, set[str]] = {}
        pred: dict[str, set[str]] = {}
        edge_set = set()
        for src, dst in edges:
            if src not in self._nodes or dst not in self._nodes:
                raise UnknownNodeError(f"edge ({src!r}, {dst!r}) references an undeclared node")
            edge_set.add((src, dst))
            succ.setdefault(src, set()).add(dst)
            pred.setdefault(dst, set()).add(src)
        self._edges = frozenset(edge_set)
        self._succ = {n: tuple(sorted(succ.get(n, ()))) for n in self._nodes}
        self._pred = {n: tuple(sorted(pred.get(n, ()))) for n in self._nodes}
        self._desc_cache: dict[str, frozenset[str]] = {}

    @staticmethod
    def from_record(rec: BinaryRecord) -> "Fcg":
        return Fcg((f.id for f in rec.functions), rec.fcg_edges)

    @property
    def nodes(self) -> frozenset[str]:
        return self._nodes

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return self._edges

    def successors(self, node: str) -> tuple[str, ...]:
        self._require(node)
        return self._succ[node]

    def degree(self, node: str) -> int:
        """Number of distinct adjacent nodes over in- and out-edges, self excluded."""
        self._require(node)
        return len((set(self._succ[node]) | set(self._pred[node])) - {node})

    def _require(self, node: str) -> None:
        if node not in self._nodes:
            raise UnknownNodeError(f"unknown node {node!r}")

    def descendants(self, node: str) -> frozenset[str]:
        """Nodes reachable from ``node`` via at least one edge.

        The node itself is included only when a non-empty path leads back
        to it (i.e. it sits on a cycle). Terminates on cyclic graphs.
        """
        self._require(node)
        cached = self._desc_cache.get(node)
        if cached is not None:
            return cached
        seen: set[str] = set()
        frontier = deque(self._succ[node])
        seen.update(self._succ[node])
        while frontier:
            cur = frontier.popleft()
            for nxt in self._succ[cur]:
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        result = frozenset(seen)
        self._desc_cache[node] = result
        return result

    def area_of(self, anchor: str) -> Area:
        """The anchor and all its reachable callees.

        Member order is anchor first, then level by level outward, ids
        sorted within each level, so serialized reports are stable.
        """
        self._require(anchor)
        order = [anchor]
        seen = {anchor}
        level = [anchor]
        while level:
            nxt = {d for n in level for d in self._succ[n]} - seen
            level = sorted(nxt)
            seen.update(level)
            order.extend(level)
        return Area(anchor=anchor, members=tuple(order))

    def induced_subgraph(self, members: Iterable[str]) -> "Fcg":
        keep = set(members)
        for m in keep:
            self._require(m)
        edges = [(s, d) for (s, d) in self._edges if s in keep and d in keep]
        return Fcg(keep, edges)
