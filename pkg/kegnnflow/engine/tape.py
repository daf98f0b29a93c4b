"""稠密矩阵上的反向模式自动微分。

所有数值均为 float64 的二维数组（行优先）。每次前向运算在 Tape 上追加一个
TapeNode；节点按创建顺序编号，创建顺序即拓扑序，反向传播按编号倒序访问。
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from kegnnflow.errors import ContractError, DimensionError, DivergenceError, ScatterIndexError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

BINARY_KINDS = ("add", "sub", "mul", "div")
UNARY_KINDS = ("relu", "leaky_relu", "log", "exp", "sqrt", "neg", "scale", "softplus")


def as_matrix(values, rows: Optional[int] = None, cols: Optional[int] = None) -> Matrix:
    """把标量、列表或数组转换为 float64 二维矩阵。"""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1) if rows is None else arr.reshape(rows, -1)
    if arr.ndim != 2:
        raise DimensionError(f"需要二维矩阵，得到 {arr.ndim} 维数组")
    if rows is not None and cols is not None and arr.shape != (rows, cols):
        raise DimensionError(f"矩阵形状 {arr.shape} 与声明的 ({rows}, {cols}) 不一致")
    return arr


class TapeNode:
    __slots__ = ("id", "tape", "value", "grad", "op", "parents", "requires_grad", "name", "_backward")

    def __init__(self, tape, node_id, value, op, parents, requires_grad, name=None, backward=None):
        self.id = node_id
        self.tape = tape
        self.value = value
        self.grad = np.zeros_like(value)
        self.op = op
        self.parents: Tuple["TapeNode", ...] = parents
        self.requires_grad = requires_grad
        self.name = name
        self._backward = backward

    @property
    def shape(self) -> Tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def __repr__(self):
        label = self.name or self.op
        return f"TapeNode(id={self.id}, op={label}, shape={self.shape})"


class Tape:
    """一次前向计算的记录。不同 Tape 之间没有共享状态。"""

    def __init__(self):
        self.nodes: List[TapeNode] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, requires_grad: bool = False, name: Optional[str] = None) -> TapeNode:
        return self._push(as_matrix(value).copy(), "leaf", (), requires_grad, name=name)

    def constant(self, value) -> TapeNode:
        return self._push(as_matrix(value), "const", (), False)

    def record(self, value: Matrix, op: str, parents: Sequence[TapeNode], backward: Callable) -> TapeNode:
        for parent in parents:
            if parent.tape is not self:
                raise ContractError(f"{op}: 输入节点不属于同一个 Tape")
        if not np.all(np.isfinite(value)):
            raise DivergenceError(f"{op} 的输出包含 NaN/Inf")
        requires_grad = any(p.requires_grad for p in parents)
        return self._push(value, op, tuple(parents), requires_grad, backward=backward)

    def _push(self, value, op, parents, requires_grad, name=None, backward=None) -> TapeNode:
        node = TapeNode(self, len(self.nodes), value, op, parents, requires_grad, name, backward)
        self.nodes.append(node)
        return node

    def zero_grad(self) -> None:
        for node in self.nodes:
            node.grad.fill(0.0)

    def parameters(self) -> Dict[str, TapeNode]:
        return {n.name: n for n in self.nodes if n.op == "leaf" and n.requires_grad and n.name}


def backward(loss: TapeNode) -> Dict[str, Matrix]:
    """从 1×1 的 loss 出发反向传播。

    每次调用先在局部伴随量中完成整轮传播，再累加到各节点的 grad 上，
    因此同一 Tape 上连续调用两次（不清零）得到恰好 2 倍的梯度。
    返回 {参数名: 累积梯度}。
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward 需要 1×1 的标量 loss，得到 {loss.shape}")
    tape = loss.tape
    adjoint: Dict[int, Matrix] = {loss.id: np.ones((1, 1))}
    for node in reversed(tape.nodes[: loss.id + 1]):
        g = adjoint.get(node.id)
        if g is None or not node.requires_grad or node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node.parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in adjoint:
                adjoint[parent.id] = adjoint[parent.id] + pg
            else:
                adjoint[parent.id] = pg
    for node_id, g in adjoint.items():
        node = tape.nodes[node_id]
        if node.requires_grad:
            node.grad += g
    return {name: node.grad for name, node in tape.parameters().items()}


def _unbroadcast(grad: Matrix, shape: Tuple[int, int]) -> Matrix:
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


def _check_broadcast(op: str, a: TapeNode, b: TapeNode) -> None:
    (ar, ac), (br, bc) = a.shape, b.shape
    if (ar, ac) == (br, bc):
        return
    for (r1, c1), (r2, c2) in (((ar, ac), (br, bc)), ((br, bc), (ar, ac))):
        if (r2, c2) == (1, 1):
            return
        if r2 == 1 and c2 == c1:
            return
        if c2 == 1 and r2 == r1:
            return
    raise DimensionError(f"{op}: 形状 {a.shape} 与 {b.shape} 无法按行/列广播")


def matmul(a: TapeNode, b: TapeNode) -> TapeNode:
    if a.cols != b.rows:
        raise DimensionError(f"matmul: 形状 {a.shape} 与 {b.shape} 不匹配")
    av, bv = a.value, b.value

    def _backward(g):
        return g @ bv.T, av.T @ g

    return a.tape.record(av @ bv, "matmul", (a, b), _backward)


def elementwise(op_kind: str, a: TapeNode, b: Optional[TapeNode] = None, scalar: float = 0.0) -> TapeNode:
    """逐元素运算。

    二元：add/sub/mul/div，支持完全同形或一方为 1×cols、rows×1、1×1 的广播。
    一元：relu/leaky_relu(scalar 为负斜率)/log/exp/sqrt/neg/scale(scalar 为系数)/softplus。
    """
    if op_kind in BINARY_KINDS:
        if b is None:
            raise ContractError(f"{op_kind} 需要两个操作数")
        return _binary(op_kind, a, b)
    if op_kind in UNARY_KINDS:
        return _unary(op_kind, a, scalar)
    raise ContractError(f"未知的逐元素运算: {op_kind}")


def _binary(kind: str, a: TapeNode, b: TapeNode) -> TapeNode:
    _check_broadcast(kind, a, b)
    av, bv = a.value, b.value
    sa, sb = a.shape, b.shape
    if kind == "add":
        out = av + bv

        def _backward(g):
            return _unbroadcast(g, sa), _unbroadcast(g, sb)
    elif kind == "sub":
        out = av - bv

        def _backward(g):
            return _unbroadcast(g, sa), _unbroadcast(-g, sb)
    elif kind == "mul":
        out = av * bv

        def _backward(g):
            return _unbroadcast(g * bv, sa), _unbroadcast(g * av, sb)
    else:
        out = av / bv

        def _backward(g):
            return _unbroadcast(g / bv, sa), _unbroadcast(-g * av / (bv * bv), sb)

    return a.tape.record(out, kind, (a, b), _backward)


def _unary(kind: str, a: TapeNode, scalar: float) -> TapeNode:
    av = a.value
    if kind == "relu":
        out = np.maximum(av, 0.0)
        local = (av > 0.0).astype(np.float64)
    elif kind == "leaky_relu":
        out = np.where(av > 0.0, av, scalar * av)
        local = np.where(av > 0.0, 1.0, scalar)
    elif kind == "log":
        out = np.log(av) if np.all(av > 0.0) else np.full_like(av, np.nan)
        local = 1.0 / np.where(av > 0.0, av, 1.0)
    elif kind == "exp":
        out = np.exp(av)
        local = out
    elif kind == "sqrt":
        out = np.sqrt(av) if np.all(av >= 0.0) else np.full_like(av, np.nan)
        local = 0.5 / np.where(out > 0.0, out, np.inf)
    elif kind == "neg":
        out = -av
        local = -np.ones_like(av)
    elif kind == "scale":
        out = scalar * av
        local = np.full_like(av, scalar)
    else:
        # softplus(z) = max(z, 0) + log1p(e^{-|z|})
        out = np.maximum(av, 0.0) + np.log1p(np.exp(-np.abs(av)))
        local = stable_sigmoid(av)

    def _backward(g):
        return (g * local,)

    return a.tape.record(out, kind, (a,), _backward)


def add(a, b):
    return elementwise("add", a, b)


def sub(a, b):
    return elementwise("sub", a, b)


def mul(a, b):
    return elementwise("mul", a, b)


def div(a, b):
    return elementwise("div", a, b)


def relu(a):
    return elementwise("relu", a)


def leaky_relu(a, negative_slope: float = 0.2):
    return elementwise("leaky_relu", a, scalar=negative_slope)


def log(a):
    return elementwise("log", a)


def exp(a):
    return elementwise("exp", a)


def sqrt(a):
    return elementwise("sqrt", a)


def neg(a):
    return elementwise("neg", a)


def scale(a, factor: float):
    return elementwise("scale", a, scalar=factor)


def softplus(a):
    return elementwise("softplus", a)


def stable_sigmoid(z: Matrix) -> Matrix:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(z: TapeNode) -> TapeNode:
    out = stable_sigmoid(z.value)

    def _backward(g):
        return (g * out * (1.0 - out),)

    return z.tape.record(out, "sigmoid", (z,), _backward)


def rowwise_softmax(z: TapeNode) -> TapeNode:
    if z.rows == 0 or z.cols == 0:
        raise DimensionError(f"rowwise_softmax: 空矩阵 {z.shape}")
    shifted = z.value - z.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def _backward(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return z.tape.record(out, "softmax", (z,), _backward)


def log_softmax(z: TapeNode) -> TapeNode:
    if z.rows == 0 or z.cols == 0:
        raise DimensionError(f"log_softmax: 空矩阵 {z.shape}")
    shifted = z.value - z.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def _backward(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return z.tape.record(out, "log_softmax", (z,), _backward)


def _check_index(index, limit: int, op: str) -> np.ndarray:
    idx = np.asarray(index, dtype=np.int64).reshape(-1)
    bad = np.nonzero((idx < 0) | (idx >= limit))[0]
    if bad.size:
        row = int(bad[0])
        raise ScatterIndexError(f"{op}: 第 {row} 行的索引 {int(idx[row])} 超出范围 [0, {limit})")
    return idx


def scatter_add_rows(src: TapeNode, index, out_rows: int) -> TapeNode:
    """out[i] = Σ_{j: index[j] == i} src[j]。"""
    idx = _check_index(index, out_rows, "scatter_add_rows")
    if idx.shape[0] != src.rows:
        raise DimensionError(f"scatter_add_rows: 索引长度 {idx.shape[0]} 与源行数 {src.rows} 不一致")
    out = np.zeros((out_rows, src.cols))
    np.add.at(out, idx, src.value)

    def _backward(g):
        return (g[idx],)

    return src.tape.record(out, "scatter_add_rows", (src,), _backward)


def gather_rows(src: TapeNode, index) -> TapeNode:
    idx = _check_index(index, src.rows, "gather_rows")
    rows = src.rows

    def _backward(g):
        grad = np.zeros((rows, g.shape[1]))
        np.add.at(grad, idx, g)
        return (grad,)

    return src.tape.record(src.value[idx], "gather_rows", (src,), _backward)


def take_cols(a: TapeNode, cols) -> TapeNode:
    idx = _check_index(cols, a.cols, "take_cols")
    shape = a.shape

    def _backward(g):
        grad = np.zeros(shape)
        np.add.at(grad.T, idx, g.T)
        return (grad,)

    return a.tape.record(a.value[:, idx], "take_cols", (a,), _backward)


def concat_cols(parts: Sequence[TapeNode]) -> TapeNode:
    if not parts:
        raise ContractError("concat_cols 需要至少一个输入")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise DimensionError(f"concat_cols: 行数 {p.rows} 与 {rows} 不一致")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def _backward(g):
        return tuple(g[:, bounds[k]: bounds[k + 1]] for k in range(len(parts)))

    return parts[0].tape.record(np.hstack([p.value for p in parts]), "concat_cols", tuple(parts), _backward)


def sum_all(a: TapeNode) -> TapeNode:
    shape = a.shape

    def _backward(g):
        return (np.full(shape, g[0, 0]),)

    return a.tape.record(a.value.sum().reshape(1, 1), "sum_all", (a,), _backward)


def mean_rows(a: TapeNode) -> TapeNode:
    """按列求均值（对行取平均），得到 1×cols。"""
    if a.rows == 0:
        raise DimensionError("mean_rows: 没有行")
    n = a.rows

    def _backward(g):
        return (np.repeat(g / n, n, axis=0),)

    return a.tape.record(a.value.mean(axis=0, keepdims=True), "mean_rows", (a,), _backward)
