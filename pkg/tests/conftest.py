import numpy as np
import pytest

from hencler.graphio import AttributedGraph


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def tiny_graph(num_nodes=6, d_x=4, seed=0, directed=True, with_labels=True):
    """Small random attributed graph with at least one edge per node."""
    rng = np.random.default_rng(seed)
    edges = []
    for u in range(num_nodes):
        v = int(rng.integers(num_nodes - 1))
        v = v if v < u else v + 1
        edges.append((u, v))
    extra = rng.integers(0, num_nodes, size=(num_nodes, 2))
    edges.extend((int(a), int(b)) for a, b in extra if a != b)
    edges = np.unique(np.asarray(edges, dtype=np.int64), axis=0)
    labels = rng.integers(0, 2, size=num_nodes) if with_labels else None
    return AttributedGraph(
        num_nodes=num_nodes, directed=directed, edges=edges,
        features=rng.normal(size=(num_nodes, d_x)),
        labels=labels, num_classes=2 if with_labels else None)
