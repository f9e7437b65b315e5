"""Undirected graphs, edge betweenness and Girvan-Newman bisection."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

Edge = tuple[int, int]


def _norm(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class SocialGraph:
    n: int
    edges: tuple[Edge, ...]
    communities: np.ndarray  # community index per node, 0-based

    def __post_init__(self):
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range for {self.n} nodes")
            e = _norm(u, v)
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
        if self.communities.shape != (self.n,):
            raise ValueError("need one community label per node")

    @property
    def n_communities(self) -> int:
        return int(self.communities.max()) + 1

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            a[u, v] = a[v, u] = 1.0
        return a

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            d[u] += 1
            d[v] += 1
        return d


def adjacency_lists(n: int, edges) -> list[list[int]]:
    adj = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    for nbrs in adj:
        nbrs.sort()
    return adj


def read_edgelist(path) -> tuple[int, list[Edge]]:
    """Read ``u v`` pairs (0-indexed, one per line, ``#`` comments allowed)."""
    edges = []
    n = 0
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        u, v = (int(x) for x in line.split()[:2])
        edges.append(_norm(u, v))
        n = max(n, u + 1, v + 1)
    return n, edges


def karate_edges() -> tuple[int, list[Edge]]:
    with resources.as_file(resources.files("pocar.data") / "karate.edgelist") as p:
        return read_edgelist(p)


def connected_components(n: int, edges) -> list[list[int]]:
    """Components sorted by their smallest node."""
    adj = adjacency_lists(n, edges)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [], deque([s])
        while queue:
            u = queue.popleft()
            comp.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def edge_betweenness(n: int, edges) -> dict[Edge, float]:
    """Unnormalised edge betweenness over unordered node pairs (Brandes)."""
    adj = adjacency_lists(n, edges)
    bc = {_norm(u, v): 0.0 for u, v in edges}
    for s in range(n):
        order = []
        preds = [[] for _ in range(n)]
        sigma = [0.0] * n
        dist = [-1] * n
        sigma[s], dist[s] = 1.0, 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        dep = [0.0] * n
        for w in reversed(order):
            for v in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + dep[w])
                bc[_norm(v, w)] += c
                dep[v] += c
    # every unordered pair was visited from both ends
    return {e: b / 2.0 for e, b in bc.items()}


def pick_max_edge(bc: dict[Edge, float], rel_tol: float = 1e-9) -> Edge:
    """Highest-betweenness edge; near-ties go to the lexicographically smallest."""
    top = max(bc.values())
    return min(e for e, b in bc.items() if b >= top - rel_tol * max(1.0, abs(top)))


def girvan_newman_bisect(n: int, edges) -> np.ndarray:
    """Remove top-betweenness edges until the graph falls into two parts.

    Returns a 0/1 label per node; the component holding node 0 is labelled 0.
    Inputs that are already disconnected are labelled by component as-is.
    """
    remaining = sorted({_norm(u, v) for u, v in edges})
    comps = connected_components(n, remaining)
    while len(comps) < 2:
        if not remaining:
            raise ValueError("graph has no edges left to remove")
        remaining.remove(pick_max_edge(edge_betweenness(n, remaining)))
        comps = connected_components(n, remaining)
    labels = np.zeros(n, dtype=np.int64)
    for i, comp in enumerate(comps):
        labels[comp] = i
    return labels


def karate_graph() -> SocialGraph:
    n, edges = karate_edges()
    return SocialGraph(n, tuple(edges), girvan_newman_bisect(n, edges))


def communities_json(graph: SocialGraph) -> str:
    """Community labels (1-based) plus edge betweenness, for inspection."""
    bc = edge_betweenness(graph.n, graph.edges)
    doc = {
        "nodes": graph.n,
        "labels": [int(c) + 1 for c in graph.communities],
        "communities": {
            str(c + 1): [int(v) for v in np.flatnonzero(graph.communities == c)]
            for c in range(graph.n_communities)
        },
        "edge_betweenness": [[u, v, bc[(u, v)]] for u, v in sorted(bc)],
    }
    return json.dumps(doc, indent=1)
