"""子句语言的实值语义：Gödel t-conorm、模糊否定，以及文字与预激活之间的符号约定。"""

from typing import Dict, Hashable, Sequence

import numpy as np

from kegnnflow.engine.tape import stable_sigmoid
from kegnnflow.errors import ContractError, DomainError
from kegnnflow.logic.clauses import Clause, Literal

# 真值赋值：(谓词, 常元元组) -> t ∈ [0, 1]，例如 ("AI", (3,)) 或 ("Cite", (3, 5))
TruthAssignment = Dict[Hashable, float]


def _check_truth(t: float) -> float:
    if not (0.0 <= t <= 1.0):
        raise DomainError(f"真值必须位于 [0, 1]，得到 {t}")
    return t


def godel_tconorm(ts: Sequence[float]) -> float:
    values = [float(t) for t in ts]
    if not values:
        raise ContractError("godel_tconorm 需要非空的真值向量")
    for t in values:
        _check_truth(t)
    return max(values)


def fuzzy_not(t: float) -> float:
    return 1.0 - _check_truth(float(t))


def literal_truth(lit: Literal, t_pred: float) -> float:
    t = _check_truth(float(t_pred))
    return t if lit.positive else 1.0 - t


def literal_preactivation_sign(lit: Literal) -> int:
    """正文字 +1，否定文字 -1，使得 σ(sign·z) = literal_truth(lit, σ(z))。"""
    return lit.sign


def sigmoid(z):
    out = stable_sigmoid(np.asarray(z, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def clause_truth(clause: Clause, assignment: TruthAssignment, grounding: Dict[str, int]) -> float:
    """在给定代换 grounding（变量 -> 节点）下求子句的真值。"""
    truths = []
    for lit in clause.literals:
        key = (lit.predicate, tuple(grounding[v] for v in lit.variables))
        if key not in assignment:
            raise ContractError(f"真值赋值中缺少 {lit.predicate}{key[1]}")
        truths.append(literal_truth(lit, assignment[key]))
    return godel_tconorm(truths)
