"""类别同质性子句的经验满足率（compliance）。"""

import logging
from typing import List, Optional

from kegnnflow.errors import ConfigError
from kegnnflow.graph.graph_store import Graph

logger = logging.getLogger(__name__)


def clause_compliance(graph: Graph, class_index: int, node_set: str = "train") -> Optional[float]:
    """Σ_{v∈V_k} Σ_{u∈N(v)} 1(u∈V_k) / Σ_{v∈V_k} |N(v)|。

    V_k 与 N(v) 都限制在 node_set 内。分母为 0 时返回 None（未定义，区别于 0.0）。
    """
    if not (0 <= class_index < graph.num_classes):
        raise ConfigError(f"类别编号 {class_index} 超出 [0, {graph.num_classes})")
    in_set = graph.mask(node_set)
    if graph.num_edges == 0:
        return None
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    counted = in_set[src] & in_set[dst] & (graph.labels[src] == class_index)
    denominator = int(counted.sum())
    if denominator == 0:
        logger.debug("类别 %d 在 %s 节点上没有邻居，compliance 未定义", class_index, node_set)
        return None
    numerator = int((counted & (graph.labels[dst] == class_index)).sum())
    return numerator / denominator


def compliance_by_class(graph: Graph, node_set: str = "train") -> List[Optional[float]]:
    return [clause_compliance(graph, k, node_set) for k in range(graph.num_classes)]


def format_compliance(value: Optional[float]) -> str:
    return "undefined" if value is None else repr(float(value))

