"""
参数检查点：UTF-8 文本，可精确往返。

    #config {"model.kind": "gcn", ...}
    #clause _:nC0(x),nLink(x,y),C0(y)
    [layer0.weight] 5 16
    0.12345678901234568 ...
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from kegnnflow.errors import DataError, IngestionError
from kegnnflow.logic.clauses import Clause, parse_clause_line, render_clause

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    clauses: List[Clause] = field(default_factory=list)
    matrices: Dict[str, np.ndarray] = field(default_factory=dict)

    def clause_weights(self) -> Dict[str, np.ndarray]:
        return {k: v for k, v in self.matrices.items() if k.startswith("ke") and k.endswith(".clause_weights")}


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write("#config " + json.dumps(ckpt.config, sort_keys=True) + "\n")
        for clause in ckpt.clauses:
            f.write("#clause " + render_clause(clause) + "\n")
        for name, value in ckpt.matrices.items():
            value = np.asarray(value, dtype=np.float64)
            if value.ndim != 2:
                raise DataError(f"检查点矩阵 {name} 必须是二维的，得到 {value.ndim} 维")
            f.write(f"[{name}] {value.shape[0]} {value.shape[1]}\n")
            if value.size:
                np.savetxt(f, value, fmt="%.17g")
    logger.info("检查点已写入 %s（%d 个矩阵）", path, len(ckpt.matrices))


def _parses(text: str) -> bool:
    try:
        np.loadtxt([text])
    except ValueError:
        return False
    return True


def _read_block(block: List[str], rows: int, cols: int, header: str, path: str, first_line: int) -> np.ndarray:
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    try:
        data = np.loadtxt(block, dtype=np.float64, max_rows=rows, ndmin=2)
    except ValueError:
        bad = next((r for r, text in enumerate(block) if not _parses(text)), 0)
        raise IngestionError(f"矩阵 {header} 含非数值项", path, first_line + bad) from None
    return data.reshape(rows, cols)


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise DataError(f"找不到检查点文件: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    config: Dict[str, Any] = {}
    clauses: List[Clause] = []
    matrices: Dict[str, np.ndarray] = {}
    idx = 0
    while idx < len(lines):
        line = lines[idx]
        lineno = idx + 1
        idx += 1
        if not line.strip():
            continue
        if line.startswith("#config "):
            try:
                config = json.loads(line[len("#config "):])
            except json.JSONDecodeError as exc:
                raise IngestionError(f"#config 不是合法的 JSON: {exc.msg}", path, lineno) from None
            continue
        if line.startswith("#clause "):
            clauses.append(parse_clause_line(line[len("#clause "):], lineno))
            continue
        if not line.startswith("["):
            raise IngestionError(f"无法识别的行: {line[:40]!r}", path, lineno)
        try:
            header, shape = line[1:].split("]", 1)
            rows, cols = (int(x) for x in shape.split())
            if rows < 0 or cols < 0:
                raise ValueError
        except ValueError:
            raise IngestionError(f"矩阵头应为 '[name] rows cols'，得到 {line!r}", path, lineno) from None
        # 零列矩阵不写数据行
        data_rows = rows if cols else 0
        if idx + data_rows > len(lines):
            raise IngestionError(f"矩阵 {header} 的数据行不足", path, lineno)
        block = lines[idx:idx + data_rows]
        for r, text in enumerate(block):
            if len(text.split()) != cols:
                raise IngestionError(
                    f"矩阵 {header} 第 {r} 行应有 {cols} 个数，得到 {len(text.split())}", path, idx + r + 1
                )
        matrices[header] = _read_block(block, rows, cols, header, path, idx + 1)
        idx += data_rows
    if not config:
        raise IngestionError("缺少 #config 行", path)
    return Checkpoint(config, clauses, matrices)
