"""中心差分梯度校验。"""

from typing import Callable, Dict

import numpy as np

from kegnnflow.engine.tape import Tape, TapeNode, as_matrix, backward
from kegnnflow.errors import ContractError

REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _scalar(node: TapeNode) -> float:
    if node.shape != (1, 1):
        raise ContractError(f"被校验函数必须返回 1×1 标量，得到 {node.shape}")
    return float(node.value[0, 0])


def grad_check_params(
    f: Callable[[Tape, Dict[str, TapeNode]], TapeNode],
    params: Dict[str, np.ndarray],
    eps: float = 1e-5,
) -> Dict[str, float]:
    """对 params 中每个矩阵逐坐标做中心差分，返回 {参数名: 最大相对误差}。

    f 接收新建的 Tape 与叶子节点字典，返回 1×1 的 loss 节点。
    """
    if not (0.0 < eps <= 1e-2):
        raise ContractError(f"eps 必须在 (0, 1e-2] 内，得到 {eps}")
    values = {name: as_matrix(v).copy() for name, v in params.items()}

    def evaluate(current):
        tape = Tape()
        leaves = {name: tape.leaf(v, requires_grad=True, name=name) for name, v in current.items()}
        return tape, f(tape, leaves)

    _, out = evaluate(values)
    _scalar(out)
    grads = backward(out)

    errors = {}
    for name, base in values.items():
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            original = base[idx]
            base[idx] = original + eps
            plus = _scalar(evaluate(values)[1])
            base[idx] = original - eps
            minus = _scalar(evaluate(values)[1])
            base[idx] = original
            numeric[idx] = (plus - minus) / (2.0 * eps)
        analytic = grads.get(name, np.zeros_like(base))
        errors[name] = relative_error(analytic, numeric)
    return errors


def grad_check(f: Callable[[Tape, TapeNode], TapeNode], x, eps: float = 1e-5) -> float:
    """单个输入矩阵的梯度校验，返回最大相对误差。"""
    errors = grad_check_params(lambda tape, leaves: f(tape, leaves["x"]), {"x": x}, eps)
    return errors["x"]
