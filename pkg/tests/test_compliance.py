import io

import numpy as np
import pytest

from conftest import make_graph
from kegnnflow.compliance.compliance import clause_compliance, compliance_by_class, format_compliance
from kegnnflow.errors import ConfigError
from kegnnflow.graph.graph_store import symmetrize
from kegnnflow.train.experiment import ComplianceRow, write_compliance_csv


def brute_force(graph, k, node_set):
    in_set = graph.mask(node_set)
    neighbours = {v: set() for v in range(graph.num_nodes)}
    for i, j in graph.edges:
        neighbours[int(i)].add(int(j))
    numerator = denominator = 0
    for v in range(graph.num_nodes):
        if not in_set[v] or graph.labels[v] != k:
            continue
        for u in neighbours[v]:
            if in_set[u]:
                denominator += 1
                numerator += int(graph.labels[u] == k)
    return None if denominator == 0 else numerator / denominator


def test_two_nodes_of_same_class():
    graph = make_graph(2, [(0, 1), (1, 0)], [0, 0], split=["train", "train"])
    assert clause_compliance(graph, 0) == 1.0
    assert clause_compliance(graph, 1) is None


def test_star_graph_has_zero_compliance(star_graph):
    assert clause_compliance(star_graph, 0) == 0.0
    assert clause_compliance(star_graph, 1) == 0.0
    assert compliance_by_class(star_graph) == [0.0, 0.0]


def test_node_set_restricts_both_endpoints():
    graph = make_graph(3, symmetrize(np.array([[0, 1], [0, 2]])), [0, 0, 1], split=["train", "train", "test"])
    assert clause_compliance(graph, 0, "train") == 1.0
    assert clause_compliance(graph, 0, "all") == pytest.approx(2 / 3)
    assert clause_compliance(graph, 1, "train") is None
    assert clause_compliance(graph, 1, "test") is None
    assert clause_compliance(graph, 1, "all") == 0.0


def test_edgeless_graph_is_undefined():
    graph = make_graph(3, [], [0, 1, 0])
    assert compliance_by_class(graph, "all") == [None, None]


@pytest.mark.parametrize("seed", range(100))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    m = int(rng.integers(2, 5))
    dense = rng.random((n, n)) < rng.uniform(0.0, 0.3)
    np.fill_diagonal(dense, False)
    edges = np.argwhere(dense)
    split = rng.choice(["train", "valid", "test"], size=n)
    graph = make_graph(n, edges, rng.integers(m, size=n), num_classes=m, split=split)
    for node_set in ("train", "all"):
        for k in range(m):
            assert clause_compliance(graph, k, node_set) == brute_force(graph, k, node_set)


@pytest.mark.parametrize("seed", range(5))
def test_invariant_under_node_relabeling(seed, small_graph):
    perm = np.random.default_rng(seed).permutation(small_graph.num_nodes)
    inverse = np.argsort(perm)
    g = small_graph
    relabeled = make_graph(
        g.num_nodes,
        inverse[g.edges],
        g.labels[perm],
        num_classes=g.num_classes,
        features=g.features[perm],
        split=np.where(g.train_mask, "train", np.where(g.valid_mask, "valid", "test"))[perm],
    )
    assert compliance_by_class(relabeled) == compliance_by_class(g)


def test_class_index_out_of_range(star_graph):
    with pytest.raises(ConfigError):
        clause_compliance(star_graph, 2)


def test_undefined_is_distinct_from_zero_in_csv():
    assert format_compliance(None) == "undefined"
    assert format_compliance(0.0) == "0.0"
    stream = io.StringIO()
    write_compliance_csv(
        [ComplianceRow("_:nC0(x),nLink(x,y),C0(y)", 0.5, 0.75), ComplianceRow("_:nC1(x),nLink(x,y),C1(y)", 0.25, None)],
        stream,
    )
    assert stream.getvalue().splitlines() == [
        "clause,weight,compliance",
        '"_:nC0(x),nLink(x,y),C0(y)",0.5,0.75',
        '"_:nC1(x),nLink(x,y),C1(y)",0.25,undefined',
    ]
