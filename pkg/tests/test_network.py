import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdroute.network import (Edge, GraphError, Node, TravelTimeOracle, build_graph, format_graph, grid_graph,
                             parse_graph, path_cost, shortest_path_nodes, shortest_time)

from conftest import random_graph


def to_nx(graph):
    g = nx.DiGraph()
    g.add_nodes_from(range(1, graph.n + 1))
    for s, nbrs in graph.neighbors.items():
        for t, w in nbrs:
            g.add_edge(s, t, weight=w)
    return g


def test_parse_small_graph():
    text = """# two nodes
nodes 2
node 1 0 0
node 2 1 0
edges 2
edge 1 2 30
edge 2 1 45
"""
    g = parse_graph(text)
    assert g.n == 2
    o = TravelTimeOracle(g)
    assert o.time(1, 2) == 30 and o.time(2, 1) == 45 and o.time(1, 1) == 0


@pytest.mark.parametrize("text, msg", [
    ("nodes 2\nnode 1 0 0\nnode 2 0 0\nedges 1\nedge 1 3 10\n", "dangling"),
    ("nodes 2\nnode 1 0 0\nnode 2 0 0\nedges 2\nedge 1 2 0\nedge 2 1 5\n", "non-positive"),
    ("nodes 2\nnode 1 0 0\nnode 2 0 0\nedges 2\nedge 1 2 1.5\nedge 2 1 5\n", "integer"),
    ("nodes 2\nnode 1 0 0\nnode 2 0 0\nedges 1\nedge 1 2 5\n", "strongly connected"),
    ("nodes 3\nnode 1 0 0\nnode 2 0 0\nedges 0\n", "declares 3 nodes"),
    ("nodes 1\nnode 1 0 0\nedges 0\nbogus\n", "cannot parse"),
])
def test_parse_errors(text, msg):
    with pytest.raises(GraphError, match=msg):
        parse_graph(text, "g.txt")


def test_parse_error_carries_line():
    with pytest.raises(GraphError, match=r"g.txt:5"):
        parse_graph("nodes 2\nnode 1 0 0\nnode 2 0 0\nedges 1\nedge 1 9 10\n", "g.txt")


def test_build_graph_rejects_sparse_ids():
    with pytest.raises(GraphError):
        build_graph([Node(1, 0, 0), Node(3, 0, 0)], [])


def test_format_roundtrip():
    g = grid_graph(3, 2, 17)
    assert format_graph(parse_graph(format_graph(g))) == format_graph(g)


def test_grid_distances_are_manhattan():
    g = grid_graph(5, 5, 60)
    o = TravelTimeOracle(g)
    for a in range(1, 26):
        for b in range(1, 26):
            ra, ca = divmod(a - 1, 5)
            rb, cb = divmod(b - 1, 5)
            assert o.time(a, b) == 60 * (abs(ra - rb) + abs(ca - cb))
    assert o.diameter() == 480


def test_next_hop_prefers_smallest_id():
    o = TravelTimeOracle(grid_graph(5, 5, 60))
    # from the centre to the top right corner both 8 and 14 start a shortest path
    assert o.next_hop(13, 5) == 8
    assert o.path(13, 4) == [13, 8, 3, 4]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 25))
def test_oracle_matches_networkx(seed, n):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n)
    o = TravelTimeOracle(g)
    ref = dict(nx.all_pairs_dijkstra_path_length(to_nx(g)))
    fw = nx.floyd_warshall_numpy(to_nx(g), nodelist=range(1, n + 1))
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            assert o.time(a, b) == ref[a][b] == fw[a - 1, b - 1]
            assert o.column(b)[a] == ref[a][b]
    a, b = rng.integers(1, n + 1, size=2)
    p = shortest_path_nodes(o, int(a), int(b))
    assert p[0] == a and p[-1] == b
    assert path_cost(g, p) == shortest_time(o, int(a), int(b))


def test_triangle_inequality_on_matrix():
    rng = np.random.default_rng(1)
    m = TravelTimeOracle(random_graph(rng, 15)).matrix()
    for k in range(15):
        assert (m <= m[:, [k]] + m[[k], :]).all()


def test_path_cost_rejects_missing_edge():
    g = grid_graph(2, 2)
    with pytest.raises(GraphError):
        path_cost(g, [1, 4])


def test_parallel_edges_keep_fastest():
    g = build_graph([Node(1, 0, 0), Node(2, 1, 0)], [Edge(1, 2, 50), Edge(1, 2, 20), Edge(2, 1, 10)])
    assert TravelTimeOracle(g).time(1, 2) == 20
