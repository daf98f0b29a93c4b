#!/usr/bin/env python3
"""
kegnn 总入口：kegnn <train|evaluate|compliance|gen-data|inspect|grad-check> [参数]。

各子命令也可以单独作为脚本运行（kegnn_train、kegnn_evaluate ...）。
"""

import sys
from typing import List, Optional

from kegnnflow.compliance import kegnn_compliance
from kegnnflow.graph import kegnn_gen_data
from kegnnflow.models import kegnn_inspect
from kegnnflow.train import kegnn_evaluate, kegnn_grad_check, kegnn_train

COMMANDS = {
    "train": kegnn_train,
    "evaluate": kegnn_evaluate,
    "compliance": kegnn_compliance,
    "gen-data": kegnn_gen_data,
    "inspect": kegnn_inspect,
    "grad-check": kegnn_grad_check,
}


def usage() -> str:
    return "用法: kegnn <" + "|".join(COMMANDS) + "> [参数]，kegnn <命令> -h 查看各命令的参数"


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(usage())
        return 0 if argv else 1
    command, rest = argv[0], argv[1:]
    if command not in COMMANDS:
        print(f"错误: 未知命令 {command}\n{usage()}", file=sys.stderr)
        return 1
    return COMMANDS[command].main(rest)


if __name__ == "__main__":
    sys.exit(main())
