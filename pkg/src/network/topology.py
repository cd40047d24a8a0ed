"""Graph checks on the bus/branch topology."""

from __future__ import annotations

from typing import TYPE_CHECKING, Iterable

import networkx as nx

if TYPE_CHECKING:
    from .model import Network


def build_graph(n_bus: int, edges: Iterable[tuple[int, int]]) -> nx.MultiGraph:
    """Return an undirected multigraph; parallel branches stay distinct edges."""
    graph = nx.MultiGraph()
    graph.add_nodes_from(range(n_bus))
    graph.add_edges_from(edges)
    return graph


def is_connected(n_bus: int, edges: Iterable[tuple[int, int]]) -> bool:
    if n_bus == 0:
        return False
    return nx.is_connected(build_graph(n_bus, edges))


def check_radial(net: Network) -> bool:
    """Return True iff the network graph is a tree.

    Args:
        net: A connected network.

    Returns:
        True when the graph has no cycle. Parallel branches count as a cycle.
    """
    graph = build_graph(net.n_bus, ((b.from_bus, b.to_bus) for b in net.branches))
    return bool(nx.is_tree(graph))
