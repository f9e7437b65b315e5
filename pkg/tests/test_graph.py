import itertools
from collections import deque

import networkx as nx
import numpy as np
import pytest

from pocar.envs import graph as gr


def all_shortest_paths(adj, s, t):
    """Every shortest s-t path, found by BFS layering then explicit path expansion."""
    dist = {s: 0}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    if t not in dist:
        return []
    paths = [[s]]
    for _ in range(dist[t]):
        paths = [p + [w] for p in paths for w in adj[p[-1]] if dist.get(w) == dist[p[-1]] + 1]
    return [p for p in paths if p[-1] == t]


def brute_force_betweenness(n, edges):
    adj = {v: set() for v in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    bc = {tuple(sorted(e)): 0.0 for e in edges}
    for s, t in itertools.combinations(range(n), 2):
        paths = all_shortest_paths(adj, s, t)
        for p in paths:
            for a, b in zip(p, p[1:]):
                bc[tuple(sorted((a, b)))] += 1.0 / len(paths)
    return bc


def brute_force_bisect(n, edges):
    """Iterative removal using the brute-force betweenness and the same tie rule."""
    remaining = sorted(tuple(sorted(e)) for e in edges)
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(remaining)
    while nx.number_connected_components(g) < 2:
        bc = brute_force_betweenness(n, remaining)
        top = max(bc.values())
        edge = min(e for e, b in bc.items() if b >= top - 1e-9 * max(1.0, top))
        remaining.remove(edge)
        g.remove_edge(*edge)
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    labels = np.zeros(n, dtype=int)
    for i, c in enumerate(comps):
        labels[c] = i
    return labels


def test_path_graph():
    bc = gr.edge_betweenness(3, [(0, 1), (1, 2)])
    assert bc[(0, 1)] == 2.0
    assert bc[(1, 2)] == 2.0


def test_triangle_symmetric():
    bc = gr.edge_betweenness(3, [(0, 1), (1, 2), (0, 2)])
    assert len(set(bc.values())) == 1


def test_karate_betweenness_matches_brute_force():
    n, edges = gr.karate_edges()
    assert n == 34 and len(edges) == 78
    fast = gr.edge_betweenness(n, edges)
    slow = brute_force_betweenness(n, edges)
    for e in slow:
        assert fast[e] == pytest.approx(slow[e], rel=1e-12, abs=1e-12)


def test_karate_edges_match_networkx_dataset():
    _, edges = gr.karate_edges()
    ref = {tuple(sorted(e)) for e in nx.karate_club_graph().edges()}
    assert set(edges) == ref


def test_disconnected_betweenness_per_component():
    bc = gr.edge_betweenness(5, [(0, 1), (1, 2), (3, 4)])
    assert bc == {(0, 1): 2.0, (1, 2): 2.0, (3, 4): 1.0}


def test_bridge_between_triangles_removed_first():
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    labels = gr.girvan_newman_bisect(6, edges)
    assert labels.tolist() == [0, 0, 0, 1, 1, 1]


def test_disconnected_input_unchanged():
    labels = gr.girvan_newman_bisect(4, [(0, 1), (2, 3)])
    assert labels.tolist() == [0, 0, 1, 1]


def test_karate_bisection_matches_brute_force():
    n, edges = gr.karate_edges()
    np.testing.assert_array_equal(gr.girvan_newman_bisect(n, edges), brute_force_bisect(n, edges))


def test_karate_bisection_matches_networkx():
    n, edges = gr.karate_edges()
    labels = gr.girvan_newman_bisect(n, edges)
    first = next(nx.community.girvan_newman(nx.karate_club_graph()))
    ours = {frozenset(np.flatnonzero(labels == c).tolist()) for c in (0, 1)}
    assert ours == {frozenset(c) for c in first}


def test_bisection_invariant_under_relabeling():
    n, edges = gr.karate_edges()
    base = gr.girvan_newman_bisect(n, edges)
    rng = np.random.default_rng(0)
    for _ in range(3):
        perm = rng.permutation(n)
        relabeled = gr.girvan_newman_bisect(n, [(int(perm[u]), int(perm[v])) for u, v in edges])
        parts = {frozenset(int(perm[v]) for v in np.flatnonzero(base == c)) for c in (0, 1)}
        got = {frozenset(np.flatnonzero(relabeled == c).tolist()) for c in (0, 1)}
        assert got == parts


def test_social_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        gr.SocialGraph(3, ((0, 0),), np.zeros(3, dtype=int))
    with pytest.raises(ValueError):
        gr.SocialGraph(3, ((0, 1), (1, 0)), np.zeros(3, dtype=int))


def test_read_edgelist(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n0 1\n2 1\n\n")
    assert gr.read_edgelist(p) == (3, [(0, 1), (1, 2)])


def test_karate_communities_are_connected_and_nonempty():
    g = gr.karate_graph()
    for c in (0, 1):
        nodes = set(np.flatnonzero(g.communities == c).tolist())
        assert nodes
        sub = [(u, v) for u, v in g.edges if u in nodes and v in nodes]
        h = nx.Graph()
        h.add_nodes_from(nodes)
        h.add_edges_from(sub)
        assert nx.is_connected(h)
