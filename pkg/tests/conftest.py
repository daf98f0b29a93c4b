import os

import numpy as np
import pytest

from kegnnflow.graph.graph_store import Graph, save_dataset, synthetic_homophilous

HERE = os.path.dirname(os.path.abspath(__file__))


def make_graph(num_nodes, edges, labels, num_classes=2, features=None, split=None, undirected=False):
    """手写的小图；split 为 train/valid/test 字符串列表，默认前一半 train、其余交替 valid/test。"""
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    labels = np.array(labels, dtype=np.int64)
    if features is None:
        features = np.eye(num_nodes, max(num_nodes, 1))
    if split is None:
        half = (num_nodes + 1) // 2
        split = ["train"] * half + [("valid", "test")[i % 2] for i in range(num_nodes - half)]
    split = np.array(split)
    return Graph(
        num_nodes=num_nodes,
        edges=edges,
        features=np.asarray(features, dtype=np.float64),
        labels=labels,
        train_mask=split == "train",
        valid_mask=split == "valid",
        test_mask=split == "test",
        num_classes=num_classes,
        undirected=undirected,
    ).validate()


@pytest.fixture
def small_graph():
    return synthetic_homophilous(40, 3, 4, 0.8, 3.0, rng_seed=7)


@pytest.fixture
def star_graph():
    # 中心 0 属于类别 0，叶子 1..3 属于类别 1，边双向存储
    edges = [(0, 1), (0, 2), (0, 3), (1, 0), (2, 0), (3, 0)]
    return make_graph(4, edges, [0, 1, 1, 1], split=["train"] * 4)


@pytest.fixture
def dataset_dir(tmp_path, small_graph):
    path = tmp_path / "synthetic"
    save_dataset(small_graph, str(path))
    return str(path)


@pytest.fixture
def fixture_config():
    return os.path.join(HERE, "input_kegcn.toml")


def write_config(tmp_path, dataset, **tables):
    """把 {表名: {键: 值}} 写成 TOML，experiment.dataset 指向 dataset。"""
    from kegnnflow.config import format_toml_value

    tables.setdefault("experiment", {})
    tables["experiment"].setdefault("dataset", dataset)
    tables["experiment"].setdefault("output_dir", str(tmp_path / "out"))
    lines = []
    for section, body in tables.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {format_toml_value(v)}" for k, v in body.items()]
        lines.append("")
    path = tmp_path / "config.toml"
    path.write_text("\n".join(lines), encoding="utf-8")
    return str(path)
