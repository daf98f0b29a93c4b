#!/usr/bin/env python3
"""
图数据模型与数据集目录读写。

数据集目录（全部为 UTF-8 文本，逐行）：
- meta         key=value：nodes、features、classes、undirected（可选 name；
               可选 predicates=AI,ML,... 与 link=Cite 给出子句中使用的谓词名）
- features.txt 每个节点一行：d 个空格分隔的实数，或稀疏的 idx:val 对
- labels.txt   每行一个类别编号
- edges.txt    每行一个 "src dst"（从 0 开始）
- split.txt    每行 train / valid / test 之一
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from kegnnflow.errors import ConfigError, DataError, IngestionError
from kegnnflow.logic.clauses import graph_schema

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
NODE_SETS = SPLITS + ("all",)
DATASET_FILES = ("meta", "features.txt", "labels.txt", "edges.txt", "split.txt")
META_KEYS = ("nodes", "features", "classes", "undirected", "name", "predicates", "link")

# nodes, edges, features, classes, (train, valid, test)
KNOWN_SHAPES = {
    "citeseer": (3327, 9104, 3703, 6, (1817, 500, 1000)),
    "cora": (2708, 10556, 1433, 7, (1208, 500, 1000)),
    "pubmed": (19717, 88648, 500, 3, (18217, 500, 1000)),
    "flickr": (89250, 899756, 500, 7, (44624, 22312, 22312)),
}

RngLike = Union[int, np.random.Generator, None]


@dataclass
class Graph:
    num_nodes: int
    edges: np.ndarray  # (E, 2) int64，有序对 (src, dst)
    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    train_mask: np.ndarray
    valid_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int
    undirected: bool = False
    name: str = ""
    class_names: Tuple[str, ...] = ()  # 为空时谓词名取 C0, C1, ...
    link_name: str = "Link"

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def mask(self, node_set: str) -> np.ndarray:
        if node_set == "all":
            return np.ones(self.num_nodes, dtype=bool)
        if node_set not in SPLITS:
            raise ConfigError(f"未知的节点集合: {node_set}（可选 {', '.join(NODE_SETS)}）")
        return getattr(self, f"{node_set}_mask")

    def split_counts(self) -> Tuple[int, int, int]:
        return tuple(int(self.mask(s).sum()) for s in SPLITS)

    def validate(self) -> "Graph":
        n = self.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataError(f"特征矩阵形状 {self.features.shape} 与节点数 {n} 不一致")
        if self.features.shape[1] < 1:
            raise DataError("特征维度必须 >= 1")
        if self.num_classes < 2:
            raise DataError(f"类别数必须 >= 2，得到 {self.num_classes}")
        if self.class_names and len(self.class_names) != self.num_classes:
            raise DataError(f"谓词名数量 {len(self.class_names)} 与类别数 {self.num_classes} 不一致")
        if self.labels.shape != (n,):
            raise DataError(f"标签数量 {self.labels.shape[0]} 与节点数 {n} 不一致")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DataError(f"标签必须位于 [0, {self.num_classes})")
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise DataError(f"边的端点必须位于 [0, {n})")
        overlap = (
            self.train_mask.astype(int) + self.valid_mask.astype(int) + self.test_mask.astype(int)
        ) > 1
        if overlap.any():
            raise DataError(f"train/valid/test 掩码重叠，例如节点 {int(np.argmax(overlap))}")
        if not np.all(np.isfinite(self.features)):
            raise DataError("特征矩阵包含 NaN/Inf")
        return self


@dataclass
class EdgeNormalization:
    """GCN 的自环增广对称归一化系数 1/sqrt(deg~(i) deg~(j))。"""

    edge_coeff: np.ndarray  # (E,)
    self_coeff: np.ndarray  # (n,)
    degree: np.ndarray  # (n,) 含自环的度


@dataclass
class EdgeSubset:
    """drop_edges 的结果：原边表上的保留掩码。"""

    all_edges: np.ndarray
    mask: np.ndarray
    rate: float = 0.0

    @property
    def edges(self) -> np.ndarray:
        return self.all_edges[self.mask]

    @property
    def kept(self) -> int:
        return int(self.mask.sum())


def _as_rng(seed: RngLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def symmetrize(edges: np.ndarray) -> np.ndarray:
    """追加缺失的反向边；已存在的边保持原顺序，重复边去掉。"""
    seen = set()
    ordered: List[Tuple[int, int]] = []
    for s, d in edges.tolist():
        if (s, d) not in seen:
            seen.add((s, d))
            ordered.append((s, d))
    for s, d in edges.tolist():
        if (d, s) not in seen:
            seen.add((d, s))
            ordered.append((d, s))
    return np.array(ordered, dtype=np.int64).reshape(-1, 2)


def normalization_coefficients(graph: Graph) -> EdgeNormalization:
    return edge_normalization(graph.edges, graph.num_nodes)


def edge_normalization(edges: np.ndarray, num_nodes: int) -> EdgeNormalization:
    """deg~(i) = 1 + |{j : (i, j) ∈ E}|，即 Ã = A + I 的行和。"""
    degree = np.ones(num_nodes)
    if edges.size:
        np.add.at(degree, edges[:, 0], 1.0)
        edge_coeff = 1.0 / np.sqrt(degree[edges[:, 0]] * degree[edges[:, 1]])
    else:
        edge_coeff = np.zeros(0)
    return EdgeNormalization(edge_coeff=edge_coeff, self_coeff=1.0 / degree, degree=degree)


def drop_edges(graph_or_edges, rate: float, rng_seed: RngLike = None) -> EdgeSubset:
    """以概率 rate 独立丢弃每条无向边（两个方向一起丢弃）。"""
    if not (0.0 <= rate < 1.0):
        raise ConfigError(f"edges_drop_rate 必须位于 [0, 1)，得到 {rate}")
    edges = graph_or_edges.edges if isinstance(graph_or_edges, Graph) else np.asarray(graph_or_edges)
    edges = edges.reshape(-1, 2).astype(np.int64)
    if rate == 0.0 or edges.shape[0] == 0:
        return EdgeSubset(edges, np.ones(edges.shape[0], dtype=bool), rate)
    rng = _as_rng(rng_seed)
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    keys = lo * (int(edges.max()) + 1) + hi
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    keep = rng.random(unique_keys.shape[0]) >= rate
    return EdgeSubset(edges, keep[inverse.reshape(-1)], rate)


def synthetic_homophilous(
    n: int,
    m: int,
    d: int,
    homophily: float,
    avg_degree: float,
    rng_seed: RngLike = None,
    feature_noise: float = 1.0,
    split: Sequence[float] = (0.5, 0.2, 0.3),
    undirected: bool = True,
) -> Graph:
    """生成同质性可控的合成图。

    标签均匀分布；每条边以概率 homophily 连接同类节点；特征为类别均值加高斯噪声。
    """
    if n < m or m < 2:
        raise ConfigError(f"需要 n >= m >= 2，得到 n={n}, m={m}")
    if d < 1:
        raise ConfigError(f"特征维度必须 >= 1，得到 {d}")
    if not (0.0 <= homophily <= 1.0):
        raise ConfigError(f"homophily 必须位于 [0, 1]，得到 {homophily}")
    if avg_degree < 0:
        raise ConfigError(f"avg_degree 必须 >= 0，得到 {avg_degree}")
    if len(split) != 3 or min(split) < 0 or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError(f"split 必须是三个和为 1 的非负比例，得到 {split}")
    rng = _as_rng(rng_seed)

    labels = rng.permutation(np.arange(n) % m).astype(np.int64)
    members = [np.nonzero(labels == k)[0] for k in range(m)]

    target = int(round(n * avg_degree / 2.0)) if undirected else int(round(n * avg_degree))
    seen = set()
    pairs: List[Tuple[int, int]] = []
    attempts = 0
    while len(pairs) < target and attempts < 50 * max(target, 1):
        attempts += 1
        u = int(rng.integers(n))
        k = labels[u]
        if rng.random() < homophily:
            pool = members[k]
        else:
            other = int(rng.integers(m - 1))
            pool = members[other if other < k else other + 1]
        v = int(pool[rng.integers(pool.shape[0])])
        if u == v:
            continue
        key = (min(u, v), max(u, v)) if undirected else (u, v)
        if key in seen:
            continue
        seen.add(key)
        pairs.append((u, v))
    if len(pairs) < target:
        logger.warning("合成图只生成了 %d/%d 条边", len(pairs), target)
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if undirected:
        edges = symmetrize(edges)

    means = rng.normal(0.0, 1.0, size=(m, d))
    features = means[labels] + feature_noise * rng.normal(0.0, 1.0, size=(n, d))

    order = rng.permutation(n)
    n_train = int(round(split[0] * n))
    n_valid = int(round(split[1] * n))
    masks = [np.zeros(n, dtype=bool) for _ in SPLITS]
    masks[0][order[:n_train]] = True
    masks[1][order[n_train:n_train + n_valid]] = True
    masks[2][order[n_train + n_valid:]] = True

    return Graph(
        num_nodes=n,
        edges=edges,
        features=features,
        labels=labels,
        train_mask=masks[0],
        valid_mask=masks[1],
        test_mask=masks[2],
        num_classes=m,
        undirected=undirected,
        name="synthetic",
    ).validate()


def _read_lines(path: str) -> List[str]:
    if not os.path.exists(path):
        raise IngestionError("找不到数据文件", path=path)
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_meta(path: str) -> Dict[str, str]:
    meta = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if "=" not in text:
            raise IngestionError(f"无法解析的行: {text!r}（需要 key=value）", path, lineno)
        key, value = [x.strip() for x in text.split("=", 1)]
        if key not in META_KEYS:
            raise IngestionError(f"未知的 meta 键: {key}", path, lineno)
        meta[key] = value
    for key in ("nodes", "features", "classes"):
        if key not in meta:
            raise IngestionError(f"meta 缺少 {key}", path)
    return meta


def _meta_int(meta: Dict[str, str], key: str, path: str) -> int:
    try:
        return int(meta[key])
    except ValueError:
        raise IngestionError(f"{key} 不是整数: {meta[key]!r}", path) from None


def _check_count(lines: List[str], expected: int, path: str, what: str) -> None:
    if len(lines) != expected:
        raise IngestionError(f"{what}行数 {len(lines)} 与 meta 中的节点数 {expected} 不一致", path, len(lines))


def _parse_features(path: str, n: int, d: int) -> np.ndarray:
    lines = _read_lines(path)
    _check_count(lines, n, path, "特征")
    features = np.zeros((n, d))
    file_mode = None
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        sparse = [":" in t for t in tokens]
        if any(sparse) and not all(sparse):
            raise IngestionError("同一行中混用了稠密与稀疏格式", path, lineno)
        mode = "sparse" if sparse[0] else "dense"
        if file_mode is None:
            file_mode = mode
        elif mode != file_mode:
            raise IngestionError(f"文件前面为 {file_mode} 格式，此行为 {mode} 格式", path, lineno)
        try:
            if mode == "dense":
                if len(tokens) != d:
                    raise IngestionError(f"特征列数 {len(tokens)} 与 meta 中的 {d} 不一致", path, lineno)
                features[lineno - 1] = [float(t) for t in tokens]
            else:
                for t in tokens:
                    idx_text, val_text = t.split(":", 1)
                    idx = int(idx_text)
                    if not (0 <= idx < d):
                        raise IngestionError(f"特征下标 {idx} 超出 [0, {d})", path, lineno)
                    features[lineno - 1, idx] = float(val_text)
        except ValueError:
            raise IngestionError(f"无法解析的特征值: {line.strip()!r}", path, lineno) from None
    return features


def _parse_labels(path: str, n: int, m: int) -> np.ndarray:
    lines = _read_lines(path)
    _check_count(lines, n, path, "标签")
    labels = np.zeros(n, dtype=np.int64)
    for lineno, line in enumerate(lines, start=1):
        try:
            value = int(line.strip())
        except ValueError:
            raise IngestionError(f"标签不是整数: {line.strip()!r}", path, lineno) from None
        if not (0 <= value < m):
            raise IngestionError(f"标签 {value} 超出 [0, {m})", path, lineno)
        labels[lineno - 1] = value
    return labels


def _parse_edges(path: str, n: int) -> np.ndarray:
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 2:
            raise IngestionError(f"边需要两个端点，得到 {len(tokens)} 个", path, lineno)
        try:
            s, d = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise IngestionError(f"端点不是整数: {line.strip()!r}", path, lineno) from None
        if not (0 <= s < n and 0 <= d < n):
            raise IngestionError(f"端点 ({s}, {d}) 超出 [0, {n})", path, lineno)
        pairs.append((s, d))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _parse_split(path: str, n: int) -> List[np.ndarray]:
    lines = _read_lines(path)
    _check_count(lines, n, path, "划分")
    masks = [np.zeros(n, dtype=bool) for _ in SPLITS]
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        if token not in SPLITS:
            raise IngestionError(f"未知的划分标记: {token!r}（可选 train/valid/test）", path, lineno)
        masks[SPLITS.index(token)][lineno - 1] = True
    return masks


def load_dataset(directory: str) -> Graph:
    if not os.path.isdir(directory):
        raise IngestionError("数据集目录不存在", path=directory)
    paths = {name: os.path.join(directory, name) for name in DATASET_FILES}
    meta = _parse_meta(paths["meta"])
    n = _meta_int(meta, "nodes", paths["meta"])
    d = _meta_int(meta, "features", paths["meta"])
    m = _meta_int(meta, "classes", paths["meta"])
    undirected = meta.get("undirected", "false").lower() == "true"
    name = meta.get("name") or os.path.basename(os.path.normpath(directory))
    class_names = tuple(p.strip() for p in meta["predicates"].split(",")) if meta.get("predicates") else ()
    link_name = meta.get("link") or "Link"

    features = _parse_features(paths["features.txt"], n, d)
    labels = _parse_labels(paths["labels.txt"], n, m)
    edges = _parse_edges(paths["edges.txt"], n)
    if undirected:
        edges = symmetrize(edges)
    masks = _parse_split(paths["split.txt"], n)

    try:
        graph = Graph(
            n, edges, features, labels, masks[0], masks[1], masks[2], m, undirected, name, class_names, link_name
        ).validate()
        graph_schema(graph)
    except DataError as exc:
        raise IngestionError(str(exc), path=directory) from None

    mismatches = check_known_shape(name, graph)
    if mismatches:
        logger.warning("数据集 %s 与已知规模不一致: %s", name, "; ".join(mismatches))
    logger.info(
        "已读取 %s: %d 个节点, %d 条边, %d 维特征, %d 个类别, 划分 %s",
        name, n, graph.num_edges, d, m, "/".join(map(str, graph.split_counts())),
    )
    return graph


def check_known_shape(name: str, graph: Graph) -> List[str]:
    """与已知基准数据集规模比对，返回不一致项；未知名称返回空列表。"""
    key = name.lower()
    if key not in KNOWN_SHAPES:
        return []
    nodes, edges, feats, classes, split = KNOWN_SHAPES[key]
    actual = (graph.num_nodes, graph.num_edges, graph.num_features, graph.num_classes, graph.split_counts())
    labels = ("nodes", "edges", "features", "classes", "split")
    return [
        f"{label}: 期望 {want}，实际 {got}"
        for label, want, got in zip(labels, (nodes, edges, feats, classes, split), actual)
        if tuple(np.atleast_1d(want)) != tuple(np.atleast_1d(got))
    ]


def save_dataset(graph: Graph, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    g = graph.validate()
    with open(os.path.join(directory, "meta"), "w", encoding="utf-8") as f:
        f.write(f"nodes={g.num_nodes}\n")
        f.write(f"features={g.num_features}\n")
        f.write(f"classes={g.num_classes}\n")
        f.write(f"undirected={'true' if g.undirected else 'false'}\n")
        if g.name:
            f.write(f"name={g.name}\n")
        if g.class_names:
            f.write(f"predicates={','.join(g.class_names)}\n")
        if g.link_name != "Link":
            f.write(f"link={g.link_name}\n")

    sparse = np.count_nonzero(g.features) < 0.5 * g.features.size
    with open(os.path.join(directory, "features.txt"), "w", encoding="utf-8") as f:
        for row in g.features:
            if sparse:
                f.write(" ".join(f"{i}:{float(row[i])!r}" for i in np.nonzero(row)[0]) + "\n")
            else:
                f.write(" ".join(repr(float(x)) for x in row) + "\n")

    with open(os.path.join(directory, "labels.txt"), "w", encoding="utf-8") as f:
        f.writelines(f"{int(y)}\n" for y in g.labels)
    with open(os.path.join(directory, "edges.txt"), "w", encoding="utf-8") as f:
        f.writelines(f"{int(s)} {int(d)}\n" for s, d in g.edges)

    split = np.full(g.num_nodes, "", dtype=object)
    for name in SPLITS:
        split[g.mask(name)] = name
    if np.any(split == ""):
        raise DataError("存在不属于任何划分的节点，无法写出 split.txt")
    with open(os.path.join(directory, "split.txt"), "w", encoding="utf-8") as f:
        f.writelines(f"{s}\n" for s in split)
    logger.info("数据集已写出: %s", directory)
