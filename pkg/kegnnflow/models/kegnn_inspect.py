#!/usr/bin/env python3
"""
打印检查点的参数清单：配置、子句、每个矩阵的形状与范数，以及逐层的子句权重。
"""

import argparse
import sys
from typing import List, Optional

import numpy as np

from kegnnflow.console import add_verbose_flag, run_guarded
from kegnnflow.logic.clauses import render_clause
from kegnnflow.models.checkpoint import Checkpoint, load_checkpoint


def render_manifest(ckpt: Checkpoint) -> str:
    lines = ["[config]"]
    for key in sorted(ckpt.config):
        lines.append(f"  {key} = {ckpt.config[key]!r}")
    lines.append("")
    lines.append(f"[matrices] {len(ckpt.matrices)}")
    total = 0
    for name, value in ckpt.matrices.items():
        total += value.size
        lines.append(f"  {name:36s} {value.shape[0]:>5d} x {value.shape[1]:<5d} |W|={np.linalg.norm(value):.6g}")
    lines.append(f"  共 {total} 个标量")
    weights = ckpt.clause_weights()
    if weights:
        lines.append("")
        lines.append(f"[clause weights] {len(weights)} 层 x {len(ckpt.clauses)} 条子句")
        for name in sorted(weights):
            lines.append(f"  {name}")
            for c, clause in enumerate(ckpt.clauses):
                lines.append(f"    {weights[name][0, c]:>12.6g}  {render_clause(clause)}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="查看检查点中的参数与子句权重")
    parser.add_argument("checkpoint", help="检查点文件")
    add_verbose_flag(parser)
    return parser


def cmd_inspect(args: argparse.Namespace) -> int:
    print(render_manifest(load_checkpoint(args.checkpoint)))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run_guarded(cmd_inspect, args)


if __name__ == "__main__":
    sys.exit(main())
