"""
训练循环：loss、准确率、早停，以及单次运行 train()。

每次运行的随机性拆成互不干扰的几路流（初始化、dropout、丢边、批次打乱、
子句权重初始化），因此 ke.layers = 0 或权重全为 0 时与基网络逐位一致。
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from kegnnflow.engine import tape as T
from kegnnflow.engine.optim import AdamState, adam_step
from kegnnflow.engine.tape import Tape, TapeNode, backward
from kegnnflow.errors import ConfigError, ContractError, DataError, DivergenceError
from kegnnflow.graph.graph_store import Graph, drop_edges
from kegnnflow.logic.clauses import Clause, PredicateSchema, graph_schema
from kegnnflow.models.base_networks import BaseNetwork, ModelConfig, ModelParams, build_model
from kegnnflow.models.knowledge_layer import (
    ClauseWeights,
    KnowledgeConfig,
    KnowledgeStack,
    build_grounding_table,
    clip_clause_weights,
    init_clause_weights,
)

logger = logging.getLogger(__name__)

LOSS_KINDS = ("ce", "bce")
STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_EDGE_DROP = 2
STREAM_SHUFFLE = 3
STREAM_CLAUSE_INIT = 4


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), stream])


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.01
    batch_size: Union[str, int] = "full"
    early_stopping: bool = True
    min_delta: float = 0.001
    patience: int = 10
    edges_drop_rate: float = 0.0
    seed: int = 1234
    runs: int = 1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_epsilon: float = 1e-7
    loss: str = "ce"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs 必须 >= 1，得到 {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"train.learning_rate 必须为正数，得到 {self.learning_rate}")
        if self.batch_size != "full" and (isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int) or self.batch_size < 1):
            raise ConfigError(f"train.batch_size 必须是 \"full\" 或正整数，得到 {self.batch_size!r}")
        if self.patience < 1:
            raise ConfigError(f"train.patience 必须 >= 1，得到 {self.patience}")
        if self.min_delta < 0:
            raise ConfigError(f"train.min_delta 必须 >= 0，得到 {self.min_delta}")
        if not (0.0 <= self.edges_drop_rate < 1.0):
            raise ConfigError(f"train.edges_drop_rate 必须位于 [0, 1)，得到 {self.edges_drop_rate}")
        if self.runs < 1:
            raise ConfigError(f"train.runs 必须 >= 1，得到 {self.runs}")
        if self.loss not in LOSS_KINDS:
            raise ConfigError(f"train.loss 必须是 {LOSS_KINDS} 之一，得到 {self.loss}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    valid_loss: float
    valid_accuracy: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "valid_loss": self.valid_loss,
            "valid_accuracy": self.valid_accuracy,
        }


@dataclass
class RunResult:
    run_index: int
    seed: int
    history: List[EpochRecord]
    test_accuracy: float
    best_epoch: int
    clause_weights: np.ndarray  # (layers, K)，早停选中的参数
    clause_weight_history: List[np.ndarray] = field(default_factory=list)
    epoch_times: List[float] = field(default_factory=list)
    model_params: Optional[ModelParams] = None

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    @property
    def mean_epoch_seconds(self) -> float:
        return float(np.mean(self.epoch_times)) if self.epoch_times else 0.0


def _mask_indices(mask, num_nodes: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.dtype == bool:
        if mask.shape[0] != num_nodes:
            raise ContractError(f"掩码长度 {mask.shape[0]} 与节点数 {num_nodes} 不一致")
        idx = np.nonzero(mask)[0]
    else:
        idx = mask.astype(np.int64).reshape(-1)
    if idx.size == 0:
        raise ContractError("掩码为空，无法计算 loss/准确率")
    return idx


def loss(z: TapeNode, labels: np.ndarray, mask, kind: str = "ce") -> TapeNode:
    """ce：softmax 交叉熵；bce：逐类别 σ 的二元交叉熵（按类求和）。均对掩码节点取平均。"""
    idx = _mask_indices(mask, z.rows)
    one_hot = np.zeros((idx.size, z.cols))
    one_hot[np.arange(idx.size), labels[idx]] = 1.0
    rows = T.gather_rows(z, idx)
    target = z.tape.constant(one_hot)
    if kind == "ce":
        picked = T.mul(T.log_softmax(rows), target)
        return T.scale(T.sum_all(picked), -1.0 / idx.size)
    if kind == "bce":
        # softplus(z) - y z = -[y log σ(z) + (1 - y) log(1 - σ(z))]
        per_entry = T.sub(T.softplus(rows), T.mul(rows, target))
        return T.scale(T.sum_all(per_entry), 1.0 / idx.size)
    raise ConfigError(f"train.loss 必须是 {LOSS_KINDS} 之一，得到 {kind}")


def accuracy(z, labels: np.ndarray, mask) -> float:
    values = z.value if isinstance(z, TapeNode) else np.asarray(z)
    idx = _mask_indices(mask, values.shape[0])
    # np.argmax 在并列时取最小的类别编号
    return float(np.mean(np.argmax(values[idx], axis=1) == labels[idx]))


class EarlyStopping:
    """监控验证 loss：只有比历史最优低超过 min_delta 才算改进。"""

    def __init__(self, patience: int = 10, min_delta: float = 0.001):
        self.patience = patience
        self.min_delta = min_delta
        self.counter = 0
        self.best_score: Optional[float] = None
        self.best_epoch: Optional[int] = None
        self.early_stop = False

    def __call__(self, val_loss: float, epoch: int) -> bool:
        """返回本轮是否为改进。"""
        if self.best_score is None or val_loss < self.best_score - self.min_delta:
            self.best_score = val_loss
            self.best_epoch = epoch
            self.counter = 0
            self.early_stop = False
            return True
        self.counter += 1
        logger.debug("早停计数 %d/%d", self.counter, self.patience)
        if self.counter >= self.patience:
            self.early_stop = True
        return False


def early_stop_check(valid_history: Sequence[float], min_delta: float, patience: int) -> bool:
    tracker = EarlyStopping(patience, min_delta)
    for epoch, value in enumerate(valid_history, start=1):
        tracker(value, epoch)
        if tracker.early_stop:
            return True
    return False


class EnhancedModel:
    """基网络加知识增强层；ke.layers = 0 时就是基网络本身。"""

    def __init__(
        self,
        graph: Graph,
        model_cfg: ModelConfig,
        clauses: Sequence[Clause],
        ke_cfg: KnowledgeConfig,
        seed: int,
        schema: Optional[PredicateSchema] = None,
    ):
        m = graph.num_classes
        self.graph = graph
        self.ke_cfg = ke_cfg
        self.network: BaseNetwork = build_model(model_cfg, graph.num_features, m, stream_rng(seed, STREAM_INIT))
        self.clauses = list(clauses) if ke_cfg.layers > 0 else []
        layers = ke_cfg.layers if self.clauses else 0
        self.weights: ClauseWeights = init_clause_weights(
            self.clauses,
            layers,
            ke_cfg.clause_weight_init,
            stream_rng(seed, STREAM_CLAUSE_INIT),
            ke_cfg.min_clause_weight,
            ke_cfg.max_clause_weight,
        )
        table = build_grounding_table(graph.edges, m, ke_cfg.binary_preactivation, graph.num_nodes)
        self.stack = KnowledgeStack(self.clauses, schema or graph_schema(graph), table, ke_cfg.literal_signs)

    def leaves(self, tape: Tape) -> Dict[str, TapeNode]:
        out = self.network.leaves(tape)
        out.update({node.name: node for node in self.weights.leaves(tape)})
        return out

    def forward(
        self,
        tape: Tape,
        edge_mask=None,
        mode: str = "eval",
        rng=None,
        leaves: Optional[Dict[str, TapeNode]] = None,
    ) -> TapeNode:
        leaves = self.leaves(tape) if leaves is None else leaves
        layer_weights = [leaves[name] for name in self.weights.names]
        edges = self.graph.edges if edge_mask is None else self.graph.edges[edge_mask]
        z = self.network.forward(tape, leaves, self.graph.features, edges, mode, rng)
        table = self.stack.table if edge_mask is None else self.stack.table.restrict(edge_mask)
        return self.stack.forward(z, layer_weights, table)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = dict(self.network.params.weights)
        params.update(self.weights.as_dict())
        return params

    def predict(self) -> np.ndarray:
        return self.forward(Tape()).value

    def snapshot(self):
        return self.network.params.copy(), self.weights.copy()

    def restore(self, snap) -> None:
        params, weights = snap
        self.network.params.load(params)
        self.weights.values[...] = weights.values

    def load_matrices(self, matrices: Dict[str, np.ndarray]) -> None:
        """从检查点的命名矩阵恢复参数，名字或形状不符时报数据错误。"""
        targets = dict(self.network.params.weights)
        targets.update(self.network.params.buffers)
        targets.update(self.weights.as_dict())
        for name, target in targets.items():
            if name not in matrices:
                raise DataError(f"检查点缺少矩阵 {name}")
            if matrices[name].shape != target.shape:
                raise DataError(f"检查点矩阵 {name} 的形状 {matrices[name].shape} 与模型 {target.shape} 不一致")
            target[...] = matrices[name]


def _batches(train_idx: np.ndarray, batch_size, rng: np.random.Generator) -> List[np.ndarray]:
    if batch_size == "full" or batch_size >= train_idx.size:
        return [train_idx]
    order = rng.permutation(train_idx)
    return [order[s: s + batch_size] for s in range(0, order.size, batch_size)]


def train(
    graph: Graph,
    model_cfg: ModelConfig,
    clauses: Sequence[Clause],
    ke_cfg: KnowledgeConfig,
    train_cfg: TrainConfig,
    schema: Optional[PredicateSchema] = None,
    run_index: int = 0,
) -> RunResult:
    seed = train_cfg.seed
    model = EnhancedModel(graph, model_cfg, clauses, ke_cfg, seed, schema)
    state = AdamState(train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_epsilon)
    rng_dropout = stream_rng(seed, STREAM_DROPOUT)
    rng_edges = stream_rng(seed, STREAM_EDGE_DROP)
    rng_shuffle = stream_rng(seed, STREAM_SHUFFLE)
    train_idx = _mask_indices(graph.train_mask, graph.num_nodes)
    _mask_indices(graph.valid_mask, graph.num_nodes)
    weight_mask = model.weights.masks()

    stopper = EarlyStopping(train_cfg.patience, train_cfg.min_delta)
    best = model.snapshot()
    history: List[EpochRecord] = []
    weight_history: List[np.ndarray] = []
    epoch_times: List[float] = []

    for epoch in range(1, train_cfg.epochs + 1):
        start = time.perf_counter()
        try:
            edge_mask = None
            if train_cfg.edges_drop_rate > 0.0:
                edge_mask = drop_edges(graph.edges, train_cfg.edges_drop_rate, rng_edges).mask
            batch_losses = []
            for batch in _batches(train_idx, train_cfg.batch_size, rng_shuffle):
                tape = Tape()
                z = model.forward(tape, edge_mask, "train", rng_dropout)
                value = loss(z, graph.labels, batch, train_cfg.loss)
                backward(value)
                grads = {name: node.grad for name, node in tape.parameters().items()}
                adam_step(model.parameters(), grads, state, train_cfg.learning_rate, mask=weight_mask)
                clip_clause_weights(model.weights)
                batch_losses.append((float(value.value[0, 0]), batch.size))

            eval_tape = Tape()
            z_eval = model.forward(eval_tape)
            valid_loss = float(loss(z_eval, graph.labels, graph.valid_mask, train_cfg.loss).value[0, 0])
        except DivergenceError as exc:
            logger.error("运行 %d 第 %d 轮数值发散: %s", run_index, epoch, exc)
            raise DivergenceError(f"运行 {run_index} 第 {epoch} 轮数值发散: {exc}") from exc
        epoch_times.append(time.perf_counter() - start)

        total = sum(n for _, n in batch_losses)
        record = EpochRecord(
            epoch=epoch,
            train_loss=sum(v * n for v, n in batch_losses) / total,
            train_accuracy=accuracy(z_eval, graph.labels, graph.train_mask),
            valid_loss=valid_loss,
            valid_accuracy=accuracy(z_eval, graph.labels, graph.valid_mask),
        )
        history.append(record)
        weight_history.append(model.weights.values.copy())

        if stopper(valid_loss, epoch):
            best = model.snapshot()
        if train_cfg.early_stopping and stopper.early_stop:
            logger.info("运行 %d 在第 %d 轮早停（最优轮次 %d）", run_index, epoch, stopper.best_epoch)
            break

    model.restore(best)
    z_test = model.predict()
    test_accuracy = accuracy(z_test, graph.labels, graph.test_mask)
    logger.info("运行 %d: 测试准确率 %.4f", run_index, test_accuracy)
    return RunResult(
        run_index=run_index,
        seed=seed,
        history=history,
        test_accuracy=test_accuracy,
        best_epoch=int(stopper.best_epoch or 0),
        clause_weights=model.weights.values.copy(),
        clause_weight_history=weight_history,
        epoch_times=epoch_times,
        model_params=model.network.params.copy(),
    )
