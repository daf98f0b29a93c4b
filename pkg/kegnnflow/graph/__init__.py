from kegnnflow.graph.graph_store import (
    EdgeNormalization,
    EdgeSubset,
    Graph,
    drop_edges,
    edge_normalization,
    load_dataset,
    normalization_coefficients,
    save_dataset,
    synthetic_homophilous,
)

__all__ = [
    "EdgeNormalization",
    "EdgeSubset",
    "Graph",
    "drop_edges",
    "edge_normalization",
    "load_dataset",
    "normalization_coefficients",
    "save_dataset",
    "synthetic_homophilous",
]
