"""
符号部分：边索引的落地表、子句增强器（boost）、group-by 聚合与多层知识增强。

落地表 M 每条有向边 (i, j) 一行。一元谓词二值化为两列：
C_k^x 取 z[i, k]，C_k^y 取 z[j, k]；最后一列是二元谓词的常数预激活。
列顺序为 [C_0^x, C_0^y, C_1^x, C_1^y, ..., Link]。
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from kegnnflow.engine import tape as T
from kegnnflow.engine.tape import Tape, TapeNode
from kegnnflow.errors import ConfigError, DimensionError, GroundingError
from kegnnflow.logic.clauses import Clause, PredicateSchema, render_clause

logger = logging.getLogger(__name__)

SIGN_MODES = ("signed", "verbatim")
VAR_OFFSET = {"x": 0, "y": 1}


@dataclass(frozen=True)
class GroundingTable:
    edges: np.ndarray  # (E, 2)，第 r 行对应代换 x -> edges[r, 0], y -> edges[r, 1]
    num_nodes: int
    num_classes: int
    binary_preactivation: float = 500.0

    @property
    def num_rows(self) -> int:
        return int(self.edges.shape[0])

    @property
    def num_columns(self) -> int:
        return 2 * self.num_classes + 1

    @property
    def binary_column(self) -> int:
        return 2 * self.num_classes

    def unary_column(self, class_index: int, variable: str) -> int:
        return 2 * class_index + VAR_OFFSET[variable]

    def group_by_target(self, row: int, column: int) -> Optional[Tuple[int, int]]:
        """二值化列 (row, column) 回写的 (节点, 类别)；二元列返回 None。"""
        if column == self.binary_column:
            return None
        k, var = divmod(column, 2)
        return int(self.edges[row, var]), k

    def target_nodes(self, column: int) -> np.ndarray:
        if column == self.binary_column:
            raise GroundingError("二元谓词列没有 group-by 目标")
        return self.edges[:, column % 2]

    def restrict(self, mask: np.ndarray) -> "GroundingTable":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[0] != self.num_rows:
            raise DimensionError(f"边掩码长度 {mask.shape[0]} 与落地表行数 {self.num_rows} 不一致")
        return GroundingTable(self.edges[mask], self.num_nodes, self.num_classes, self.binary_preactivation)

    def preactivations(self, z: TapeNode) -> TapeNode:
        """在 tape 上构造 E×(2m+1) 的 M。"""
        if z.shape != (self.num_nodes, self.num_classes):
            raise DimensionError(f"预激活形状 {z.shape} 与落地表 ({self.num_nodes}, {self.num_classes}) 不一致")
        m = self.num_classes
        both = T.concat_cols([T.gather_rows(z, self.edges[:, 0]), T.gather_rows(z, self.edges[:, 1])])
        interleaved = T.take_cols(both, [k + m * v for k in range(m) for v in (0, 1)])
        link = z.tape.constant(np.full((self.num_rows, 1), self.binary_preactivation))
        return T.concat_cols([interleaved, link])


def build_grounding_table(
    edges: np.ndarray, num_classes: int, binary_preactivation: float = 500.0, num_nodes: Optional[int] = None
) -> GroundingTable:
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes is None:
        num_nodes = int(edges.max()) + 1 if edges.size else 0
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise GroundingError(f"边端点超出节点范围 [0, {num_nodes})")
    return GroundingTable(edges.copy(), int(num_nodes), int(num_classes), float(binary_preactivation))


def resolve_literals(clause: Clause, table: GroundingTable, schema: PredicateSchema) -> List[int]:
    """把子句的每个文字映射到落地表的列。"""
    columns = []
    for lit in clause.literals:
        arity = schema.arity(lit.predicate)
        if arity == 2 and lit.variables == ("x", "y"):
            columns.append(table.binary_column)
        elif arity == 1 and lit.variables[0] in VAR_OFFSET:
            k = schema.class_index(lit.predicate)
            if k >= table.num_classes:
                raise GroundingError(f"子句 {render_clause(clause)} 的谓词 {lit.predicate} 超出类别数")
            columns.append(table.unary_column(k, lit.variables[0]))
        else:
            raise GroundingError(
                f"子句 {render_clause(clause)} 的文字 {lit.predicate}{lit.variables} 无法对应落地表的列"
            )
    return columns


def clause_boost(
    clause: Clause,
    table_preactivations: TapeNode,
    weight: TapeNode,
    columns: Sequence[int],
    signs: str = "signed",
) -> TapeNode:
    """boost 函数 φ：按行对文字预激活 u_j = s_j z_j 取 softmax，乘以 w_c。

    返回 E×L 的谓词空间增量，第 j 列为 s_j · w_c · softmax(u)_j。
    verbatim 模式不乘符号：u_j = z_j，增量恒为正。
    """
    if signs not in SIGN_MODES:
        raise ConfigError(f"ke.literal_signs 必须是 {SIGN_MODES} 之一，得到 {signs}")
    if len(columns) != len(clause.literals):
        raise GroundingError(f"子句 {render_clause(clause)} 的列映射长度不一致")
    if weight.shape != (1, 1):
        raise DimensionError(f"子句权重应为 1×1，得到 {weight.shape}")
    tape = table_preactivations.tape
    selected = T.take_cols(table_preactivations, list(columns))
    if signs == "signed":
        sign_row = tape.constant(np.array([[float(lit.sign) for lit in clause.literals]]))
        literal_z = T.mul(selected, sign_row)
        return T.mul(T.mul(T.rowwise_softmax(literal_z), weight), sign_row)
    return T.mul(T.rowwise_softmax(selected), weight)


def group_by_scatter(deltas: TapeNode, columns: Sequence[int], table: GroundingTable) -> TapeNode:
    """把 E×L 的增量按 (节点, 类别) 累加为 n×m；二元列的增量丢弃。"""
    tape = deltas.tape
    n, m = table.num_nodes, table.num_classes
    total: Optional[TapeNode] = None
    for j, column in enumerate(columns):
        if column == table.binary_column:
            continue
        k = column // 2
        per_node = T.scatter_add_rows(T.take_cols(deltas, [j]), table.target_nodes(column), n)
        one_hot = np.zeros((1, m))
        one_hot[0, k] = 1.0
        placed = T.matmul(per_node, tape.constant(one_hot))
        total = placed if total is None else T.add(total, placed)
    if total is None:
        total = tape.constant(np.zeros((n, m)))
    return total


def ke_layer_forward(
    z: TapeNode,
    table: GroundingTable,
    clauses: Sequence[Clause],
    weights: TapeNode,
    resolved: Sequence[Sequence[int]],
    signs: str = "signed",
) -> TapeNode:
    """z' = z + Σ_c group_by(φ_c(M))。weights 为 1×K，第 c 列对应第 c 个子句。"""
    if weights.shape != (1, len(clauses)):
        raise DimensionError(f"子句权重应为 1×{len(clauses)}，得到 {weights.shape}")
    if table.num_rows == 0 or not clauses:
        return z
    m_node = table.preactivations(z)
    out = z
    for c, clause in enumerate(clauses):
        w = T.take_cols(weights, [c])
        deltas = clause_boost(clause, m_node, w, resolved[c], signs)
        out = T.add(out, group_by_scatter(deltas, resolved[c], table))
    return out


def stack_forward(
    z0: TapeNode,
    layer_weights: Sequence[TapeNode],
    table: GroundingTable,
    clauses: Sequence[Clause],
    resolved: Sequence[Sequence[int]],
    signs: str = "signed",
) -> TapeNode:
    z = z0
    for weights in layer_weights:
        z = ke_layer_forward(z, table, clauses, weights, resolved, signs)
    return z


@dataclass
class ClauseWeights:
    """每层每个子句的权重 w_c；固定权重由 learnable 掩码排除在更新之外。"""

    values: np.ndarray  # (layers, K)
    learnable: np.ndarray  # (K,) bool
    w_min: float = 0.0
    w_max: float = 500.0
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.learnable = np.asarray(self.learnable, dtype=bool).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != self.learnable.shape[0]:
            raise DimensionError(f"子句权重应为 (layers, {self.learnable.shape[0]})，得到 {self.values.shape}")
        if not self.names:
            self.names = [weight_leaf_name(l) for l in range(self.layers)]
        if self.w_min > self.w_max:
            raise ConfigError(f"ke.min_clause_weight ({self.w_min}) 大于 ke.max_clause_weight ({self.w_max})")

    @property
    def layers(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_clauses(self) -> int:
        return int(self.values.shape[1])

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {name: self.values[l: l + 1] for l, name in enumerate(self.names)}

    def masks(self) -> Dict[str, np.ndarray]:
        row = self.learnable.astype(np.float64).reshape(1, -1)
        return {name: row for name in self.names}

    def leaves(self, tape: Tape) -> List[TapeNode]:
        return [tape.leaf(self.values[l: l + 1], requires_grad=True, name=name) for l, name in enumerate(self.names)]

    def copy(self) -> "ClauseWeights":
        return ClauseWeights(self.values.copy(), self.learnable.copy(), self.w_min, self.w_max, list(self.names))


def weight_leaf_name(layer: int) -> str:
    return f"ke{layer}.clause_weights"


def init_clause_weights(
    clauses: Sequence[Clause],
    layers: int,
    init: Union[float, str] = 0.5,
    rng: Optional[np.random.Generator] = None,
    w_min: float = 0.0,
    w_max: float = 500.0,
) -> ClauseWeights:
    """init 为常数或 "random"（[0, 1) 均匀分布）；子句文件中给出的固定值与显式初值优先。"""
    k = len(clauses)
    if layers < 0:
        raise ConfigError(f"ke.layers 必须 >= 0，得到 {layers}")
    if isinstance(init, str):
        if init != "random":
            raise ConfigError(f"ke.clause_weight_init 必须是实数或 \"random\"，得到 {init!r}")
        if rng is None:
            raise ConfigError("随机初始化子句权重需要随机数生成器")
        values = rng.random((layers, k))
    else:
        values = np.full((layers, k), float(init))
    learnable = np.array([c.weight.learnable for c in clauses], dtype=bool)
    for c, clause in enumerate(clauses):
        if clause.weight.value is not None:
            values[:, c] = clause.weight.value
    weights = ClauseWeights(values, learnable, w_min, w_max)
    return clip_clause_weights(weights)


def clip_clause_weights(weights: ClauseWeights) -> ClauseWeights:
    if weights.num_clauses:
        clipped = np.clip(weights.values, weights.w_min, weights.w_max)
        weights.values[:, weights.learnable] = clipped[:, weights.learnable]
    return weights


class KnowledgeStack:
    """绑定子句、模式与落地表；forward 把 z 送过 layers 个知识增强层。"""

    def __init__(
        self,
        clauses: Sequence[Clause],
        schema: PredicateSchema,
        table: GroundingTable,
        signs: str = "signed",
    ):
        if signs not in SIGN_MODES:
            raise ConfigError(f"ke.literal_signs 必须是 {SIGN_MODES} 之一，得到 {signs}")
        if schema.num_classes != table.num_classes:
            raise GroundingError(f"模式有 {schema.num_classes} 个类别谓词，落地表有 {table.num_classes} 个类别")
        self.clauses = list(clauses)
        self.schema = schema
        self.table = table
        self.signs = signs
        self.resolved = [resolve_literals(c, table, schema) for c in self.clauses]
        logger.debug("落地表: %d 行, %d 列, %d 个子句", table.num_rows, table.num_columns, len(self.clauses))

    def forward(self, z0: TapeNode, layer_weights: Sequence[TapeNode], table: Optional[GroundingTable] = None) -> TapeNode:
        return stack_forward(z0, layer_weights, self.table if table is None else table, self.clauses, self.resolved, self.signs)


@dataclass
class KnowledgeConfig:
    layers: int = 0
    clause_weight_init: Union[float, str] = 0.5
    binary_preactivation: float = 500.0
    min_clause_weight: float = 0.0
    max_clause_weight: float = 500.0
    literal_signs: str = "signed"

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigError(f"ke.layers 必须 >= 0，得到 {self.layers}")
        if isinstance(self.clause_weight_init, str):
            if self.clause_weight_init != "random":
                raise ConfigError(f"ke.clause_weight_init 必须是实数或 \"random\"，得到 {self.clause_weight_init!r}")
        elif self.clause_weight_init < 0:
            raise ConfigError(f"ke.clause_weight_init 必须 >= 0，得到 {self.clause_weight_init}")
        if self.min_clause_weight > self.max_clause_weight:
            raise ConfigError(
                f"ke.min_clause_weight ({self.min_clause_weight}) 大于 ke.max_clause_weight ({self.max_clause_weight})"
            )
        if self.literal_signs not in SIGN_MODES:
            raise ConfigError(f"ke.literal_signs 必须是 {SIGN_MODES} 之一，得到 {self.literal_signs}")
