"""Exact Ursell functions phi(G) on small incompatibility graphs.

phi(G) = sum over edge subsets S of G with (V, S) connected and spanning
of (-1)^|S| (no factorial normalization; the caller pairs this with
w^mult / mult! cluster terms).  Evaluation uses the component recursion

    phi(U) = [U has no internal edges] - sum_{B} phi(U \\ B)

over nonempty independent sets B avoiding a fixed pivot vertex, which
costs O(3^n) instead of 2^|E|.  Values are memoized under a canonical
graph key, so relabelings of the same cluster shape are computed once.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

__all__ = ["UGraph", "ursell", "canonical_graph_key", "MEMO_VERTEX_CAP"]

logger = logging.getLogger(__name__)

MEMO_VERTEX_CAP = 10
_PERMUTATION_BUDGET = 10080  # 7! * 2; beyond this fall back to the labeled key

_memo: dict = {}


@dataclass(frozen=True)
class UGraph:
    """Undirected simple graph on vertices 0..n-1 (diagonal ignored)."""

    n: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        edges = set()
        for (a, b) in self.edges:
            if a == b:
                continue
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) outside vertex range")
            edges.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", tuple(sorted(edges)))

    def adjacency_masks(self) -> list[int]:
        masks = [0] * self.n
        for (a, b) in self.edges:
            masks[a] |= 1 << b
            masks[b] |= 1 << a
        return masks

    def is_connected(self) -> bool:
        masks = self.adjacency_masks()
        seen = 1
        frontier = 1
        while frontier:
            nxt = 0
            v = frontier
            while v:
                low = v & -v
                nxt |= masks[low.bit_length() - 1]
                v ^= low
            frontier = nxt & ~seen
            seen |= nxt
        return seen == (1 << self.n) - 1


def _phi_from_masks(n: int, masks: list[int]) -> int:
    """Component recursion over vertex bitmasks."""
    full = (1 << n) - 1
    cache: dict[int, int] = {}

    def has_internal_edge(mask: int) -> bool:
        v = mask
        while v:
            low = v & -v
            if masks[low.bit_length() - 1] & mask & ~low:
                return True
            v ^= low
        return False

    def independent(mask: int) -> bool:
        return not has_internal_edge(mask)

    def phi(mask: int) -> int:
        if mask.bit_count() == 1:
            return 1
        got = cache.get(mask)
        if got is not None:
            return got
        pivot = mask & -mask
        rest = mask ^ pivot
        total = 0 if has_internal_edge(mask) else 1
        # subtract phi over supersets of the pivot whose complement is independent
        sub = rest
        while sub:
            if independent(sub):
                total -= phi(mask ^ sub)
            sub = (sub - 1) & rest
        cache[mask] = total
        return total

    return phi(full)


def ursell(graph: UGraph) -> int:
    """Signed connected-spanning-subgraph count of ``graph``.

    Disconnected input yields 0 (the empty sum); the cluster pipeline never
    produces one, so this is logged as a caller bug rather than raised.
    """
    if not graph.is_connected():
        logger.warning("ursell called on a disconnected graph (n=%d); returning 0", graph.n)
        return 0
    if graph.n <= MEMO_VERTEX_CAP:
        key = canonical_graph_key(graph)
        got = _memo.get(key)
        if got is not None:
            return got
        value = _phi_from_masks(graph.n, graph.adjacency_masks())
        _memo[key] = value
        return value
    return _phi_from_masks(graph.n, graph.adjacency_masks())


def _refine_colors(graph: UGraph) -> list[int]:
    masks = graph.adjacency_masks()
    colors = [bin(m).count("1") for m in masks]
    for _ in range(graph.n):
        signatures = []
        for v in range(graph.n):
            neigh = sorted(
                colors[u] for u in range(graph.n) if masks[v] >> u & 1
            )
            signatures.append((colors[v], tuple(neigh)))
        order = {sig: k for k, sig in enumerate(sorted(set(signatures)))}
        new_colors = [order[sig] for sig in signatures]
        if new_colors == colors:
            break
        colors = new_colors
    return colors


def canonical_graph_key(graph: UGraph):
    """Isomorphism-invariant key for memoization (n <= MEMO_VERTEX_CAP).

    Vertices are partitioned by iterated neighborhood-color refinement and
    the minimal adjacency bitstring over class-respecting permutations is
    taken.  Highly symmetric graphs past the permutation budget fall back
    to the labeled edge tuple, which only costs cache sharing, never
    correctness.
    """
    if graph.n > MEMO_VERTEX_CAP:
        raise ValueError(f"canonical key capped at {MEMO_VERTEX_CAP} vertices")
    n = graph.n
    m = len(graph.edges)
    if m == 0:
        return ("empty", n)
    if m == n * (n - 1) // 2:
        return ("complete", n)

    colors = _refine_colors(graph)
    classes: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        classes.setdefault(c, []).append(v)
    ordered_classes = [classes[c] for c in sorted(classes)]

    budget = 1
    for cl in ordered_classes:
        for k in range(2, len(cl) + 1):
            budget *= k
        if budget > _PERMUTATION_BUDGET:
            return ("labeled", n, graph.edges)

    edge_set = set(graph.edges)
    best = None
    for parts in itertools.product(*(itertools.permutations(cl) for cl in ordered_classes)):
        perm = [v for part in parts for v in part]
        relabel = {old: new for new, old in enumerate(perm)}
        bits = 0
        for (a, b) in edge_set:
            x, y = relabel[a], relabel[b]
            if x > y:
                x, y = y, x
            bits |= 1 << (x * n + y)
        if best is None or bits < best:
            best = bits
    return ("canon", n, best)
