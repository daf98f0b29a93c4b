"""
神经部分：MLP、GCN、GAT 三种基网络，输出每个节点每个类别的预激活 z（不加激活函数）。

邻居约定：边 (i, j) 表示 A[i, j] = 1，N(i) = {j : (i, j) ∈ E}；
节点 i 的新表示汇总 N(i) ∪ {i} 的消息。
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from kegnnflow.engine import tape as T
from kegnnflow.engine.tape import Tape, TapeNode
from kegnnflow.errors import ConfigError, DimensionError
from kegnnflow.graph.graph_store import EdgeNormalization, edge_normalization

logger = logging.getLogger(__name__)

MODEL_KINDS = ("mlp", "gcn", "gat")
KIND_ALIASES = {"kemlp": "mlp", "kegcn": "gcn", "kegat": "gat"}
NEGATIVE_SLOPE = 0.2
BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass
class ModelConfig:
    kind: str = "mlp"
    hidden_layers: int = 2
    hidden_channels: int = 64
    attention_heads: int = 1
    dropout_rate: float = 0.5
    use_batch_norm: bool = True
    normalize_edges: bool = True

    def __post_init__(self):
        self.kind = KIND_ALIASES.get(str(self.kind).lower(), str(self.kind).lower())
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind 必须是 {', '.join(MODEL_KINDS)} 之一，得到 {self.kind}")
        if self.hidden_layers < 1:
            raise ConfigError(f"model.hidden_layers 必须 >= 1，得到 {self.hidden_layers}")
        if self.hidden_channels < 1:
            raise ConfigError(f"model.hidden_channels 必须 >= 1，得到 {self.hidden_channels}")
        if self.attention_heads < 1:
            raise ConfigError(f"model.attention_heads 必须 >= 1，得到 {self.attention_heads}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigError(f"model.dropout_rate 必须位于 [0, 1)，得到 {self.dropout_rate}")


@dataclass
class ModelParams:
    """可学习参数 weights 与批归一化的滑动统计量 buffers，均按名字索引。"""

    weights: Dict[str, np.ndarray]
    buffers: Dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: v.copy() for k, v in self.weights.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )

    def load(self, other: "ModelParams") -> None:
        for k, v in other.weights.items():
            self.weights[k][...] = v
        for k, v in other.buffers.items():
            self.buffers[k][...] = v


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def linear(h: TapeNode, w: TapeNode, b: TapeNode) -> TapeNode:
    return T.add(T.matmul(h, w), b)


def dropout(h: TapeNode, rate: float, mode: str, rng: Optional[np.random.Generator]) -> TapeNode:
    if mode != "train" or rate <= 0.0:
        return h
    if rng is None:
        raise ConfigError("训练模式下的 dropout 需要随机数生成器")
    keep = (rng.random(h.shape) >= rate) / (1.0 - rate)
    return T.mul(h, h.tape.constant(keep))


def batch_norm(
    h: TapeNode,
    gamma: TapeNode,
    beta: TapeNode,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    mode: str,
    update_stats: bool = True,
) -> TapeNode:
    """训练模式使用整批统计量并以动量 0.9 更新滑动统计量；评估模式使用滑动统计量。"""
    tape = h.tape
    if mode == "train":
        mu = T.mean_rows(h)
        centered = T.sub(h, mu)
        var = T.mean_rows(T.mul(centered, centered))
        if update_stats:
            running_mean *= BN_MOMENTUM
            running_mean += (1.0 - BN_MOMENTUM) * mu.value
            running_var *= BN_MOMENTUM
            running_var += (1.0 - BN_MOMENTUM) * var.value
        std = T.sqrt(T.add(var, tape.constant(BN_EPS)))
        normed = T.div(centered, std)
    else:
        normed = T.mul(
            T.sub(h, tape.constant(running_mean)),
            tape.constant(1.0 / np.sqrt(running_var + BN_EPS)),
        )
    return T.add(T.mul(normed, gamma), beta)


def gcn_layer_forward(
    h: TapeNode,
    edges: np.ndarray,
    norm: Optional[EdgeNormalization],
    w: TapeNode,
) -> TapeNode:
    """H'[i] = Σ_{j ∈ N(i) ∪ {i}} coeff(i, j) · (H W)[j]；norm 为 None 时 coeff ≡ 1。"""
    if h.cols != w.rows:
        raise DimensionError(f"GCN: 输入 {h.shape} 与权重 {w.shape} 不匹配")
    tape = h.tape
    n = h.rows
    hw = T.matmul(h, w)
    if norm is None:
        edge_coeff = np.ones((edges.shape[0], 1))
        self_coeff = np.ones((n, 1))
    else:
        if norm.edge_coeff.shape[0] != edges.shape[0] or norm.self_coeff.shape[0] != n:
            raise DimensionError("GCN: 归一化系数与边表/节点数不一致")
        edge_coeff = norm.edge_coeff.reshape(-1, 1)
        self_coeff = norm.self_coeff.reshape(-1, 1)
    messages = T.mul(T.gather_rows(hw, edges[:, 1]), tape.constant(edge_coeff))
    aggregated = T.scatter_add_rows(messages, edges[:, 0], n)
    return T.add(aggregated, T.mul(hw, tape.constant(self_coeff)))


def _with_self_loops(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    loops = np.arange(n, dtype=np.int64)
    targets = np.concatenate([edges[:, 0], loops])
    sources = np.concatenate([edges[:, 1], loops])
    return targets, sources


def attention_coefficients(scores: TapeNode, targets: np.ndarray, n: int) -> TapeNode:
    """按目标节点分组的 softmax；减去的组内最大值作为常数不参与求导。"""
    tape = scores.tape
    group_max = np.full(n, -np.inf)
    np.maximum.at(group_max, targets, scores.value[:, 0])
    shifted = T.sub(scores, tape.constant(group_max[targets].reshape(-1, 1)))
    ex = T.exp(shifted)
    denom = T.scatter_add_rows(ex, targets, n)
    return T.div(ex, T.gather_rows(denom, targets))


def gat_layer_forward(
    h: TapeNode,
    edges: np.ndarray,
    heads: List[Dict[str, TapeNode]],
    mode: str,
    concat: bool = True,
    attention_dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    return_attention: bool = False,
):
    """多头图注意力层。

    每个头：e_ij = leaky_relu(a_dst·(W H[i]) + a_src·(W H[j]))，j ∈ N(i) ∪ {i}；
    α_ij 为 i 的邻域内 softmax；H'_head[i] = Σ α_ij W H[j]。
    concat=True 时拼接各头（隐藏层），否则取平均（输出层）。
    """
    if not heads:
        raise ConfigError("GAT 至少需要一个注意力头")
    n = h.rows
    targets, sources = _with_self_loops(edges, n)
    outputs = []
    attentions = []
    for head in heads:
        w, a_src, a_dst = head["weight"], head["att_src"], head["att_dst"]
        if h.cols != w.rows:
            raise DimensionError(f"GAT: 输入 {h.shape} 与权重 {w.shape} 不匹配")
        wh = T.matmul(h, w)
        s_dst = T.matmul(wh, a_dst)
        s_src = T.matmul(wh, a_src)
        scores = T.leaky_relu(
            T.add(T.gather_rows(s_dst, targets), T.gather_rows(s_src, sources)), NEGATIVE_SLOPE
        )
        alpha = attention_coefficients(scores, targets, n)
        attentions.append(alpha.value[:, 0].copy())
        alpha = dropout(alpha, attention_dropout, mode, rng)
        outputs.append(T.scatter_add_rows(T.mul(T.gather_rows(wh, sources), alpha), targets, n))
    if len(outputs) == 1:
        out = outputs[0]
    elif concat:
        out = T.concat_cols(outputs)
    else:
        total = outputs[0]
        for o in outputs[1:]:
            total = T.add(total, o)
        out = T.scale(total, 1.0 / len(outputs))
    if return_attention:
        return out, (targets, sources, attentions)
    return out


class BaseNetwork:
    """build_model 的产物：参数加上一个产生预激活 z 的 forward。"""

    def __init__(self, cfg: ModelConfig, num_features: int, num_classes: int, rng_seed=None):
        self.cfg = cfg
        self.num_features = num_features
        self.num_classes = num_classes
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        self.params = self._init_params(rng)

    def _layer_dims(self) -> List[Tuple[int, int]]:
        cfg = self.cfg
        width = cfg.hidden_channels * (cfg.attention_heads if cfg.kind == "gat" else 1)
        dims = []
        fan_in = self.num_features
        for _ in range(cfg.hidden_layers):
            dims.append((fan_in, cfg.hidden_channels))
            fan_in = width
        dims.append((fan_in, self.num_classes))
        return dims

    def _init_params(self, rng: np.random.Generator) -> ModelParams:
        cfg = self.cfg
        weights: Dict[str, np.ndarray] = {}
        buffers: Dict[str, np.ndarray] = {}
        dims = self._layer_dims()
        for idx, (fan_in, fan_out) in enumerate(dims):
            prefix = f"layer{idx}"
            is_output = idx == len(dims) - 1
            if cfg.kind == "gat":
                for head in range(cfg.attention_heads):
                    weights[f"{prefix}.head{head}.weight"] = glorot(rng, fan_in, fan_out)
                    weights[f"{prefix}.head{head}.att_src"] = glorot(rng, fan_out, 1)
                    weights[f"{prefix}.head{head}.att_dst"] = glorot(rng, fan_out, 1)
                width = fan_out * (1 if is_output else cfg.attention_heads)
            else:
                weights[f"{prefix}.weight"] = glorot(rng, fan_in, fan_out)
                width = fan_out
            weights[f"{prefix}.bias"] = np.zeros((1, width))
            if cfg.use_batch_norm and not is_output:
                weights[f"{prefix}.bn.gamma"] = np.ones((1, width))
                weights[f"{prefix}.bn.beta"] = np.zeros((1, width))
                buffers[f"{prefix}.bn.running_mean"] = np.zeros((1, width))
                buffers[f"{prefix}.bn.running_var"] = np.ones((1, width))
        return ModelParams(weights, buffers)

    def leaves(self, tape: Tape) -> Dict[str, TapeNode]:
        return {name: tape.leaf(v, requires_grad=True, name=name) for name, v in self.params.weights.items()}

    def forward(
        self,
        tape: Tape,
        leaves: Dict[str, TapeNode],
        features: np.ndarray,
        edges: np.ndarray,
        mode: str = "eval",
        rng: Optional[np.random.Generator] = None,
        update_stats: bool = True,
    ) -> TapeNode:
        cfg = self.cfg
        n = features.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        norm = edge_normalization(edges, n) if (cfg.kind == "gcn" and cfg.normalize_edges) else None
        h = tape.constant(features)
        num_layers = cfg.hidden_layers + 1
        for idx in range(num_layers):
            prefix = f"layer{idx}"
            is_output = idx == num_layers - 1
            if cfg.kind == "mlp":
                h = T.matmul(h, leaves[f"{prefix}.weight"])
            elif cfg.kind == "gcn":
                h = gcn_layer_forward(h, edges, norm, leaves[f"{prefix}.weight"])
            else:
                heads = [
                    {key: leaves[f"{prefix}.head{k}.{key}"] for key in ("weight", "att_src", "att_dst")}
                    for k in range(cfg.attention_heads)
                ]
                h = gat_layer_forward(
                    h, edges, heads, mode,
                    concat=not is_output,
                    attention_dropout=0.0 if is_output else cfg.dropout_rate,
                    rng=rng,
                )
            h = T.add(h, leaves[f"{prefix}.bias"])
            if is_output:
                break
            if cfg.use_batch_norm:
                h = batch_norm(
                    h,
                    leaves[f"{prefix}.bn.gamma"],
                    leaves[f"{prefix}.bn.beta"],
                    self.params.buffers[f"{prefix}.bn.running_mean"],
                    self.params.buffers[f"{prefix}.bn.running_var"],
                    mode,
                    update_stats,
                )
            h = T.relu(h)
            h = dropout(h, cfg.dropout_rate, mode, rng)
        return h


def build_model(cfg: ModelConfig, num_features: int, num_classes: int, rng_seed=None) -> BaseNetwork:
    model = BaseNetwork(cfg, num_features, num_classes, rng_seed)
    logger.debug(
        "构建 %s: %d 个参数矩阵, 共 %d 个标量",
        cfg.kind, len(model.params.weights), sum(v.size for v in model.params.weights.values()),
    )
    return model


def mlp_forward(model: BaseNetwork, tape: Tape, leaves, features, mode="eval", rng=None) -> TapeNode:
    if model.cfg.kind != "mlp":
        raise ConfigError(f"mlp_forward 需要 mlp 模型，得到 {model.cfg.kind}")
    return model.forward(tape, leaves, features, np.zeros((0, 2), dtype=np.int64), mode, rng)
