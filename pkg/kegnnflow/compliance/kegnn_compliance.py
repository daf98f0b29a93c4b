#!/usr/bin/env python3
"""
计算子句的 compliance，CSV（clause,weight,compliance）输出到标准输出。
"""

import argparse
import sys
from typing import List, Optional

from kegnnflow.compliance.compliance import clause_compliance
from kegnnflow.console import add_verbose_flag, run_guarded
from kegnnflow.graph.graph_store import NODE_SETS, load_dataset
from kegnnflow.logic.clauses import TEMPLATE, class_template_index, graph_schema, render_clause
from kegnnflow.models.checkpoint import load_checkpoint
from kegnnflow.models.knowledge_layer import weight_leaf_name
from kegnnflow.train.experiment import ComplianceRow, resolve_clauses, write_compliance_csv


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="统计类别同质性子句在图上的满足率")
    parser.add_argument("dataset", help="数据集目录")
    parser.add_argument("-k", "--clauses", default=TEMPLATE, help="子句文件，默认按类别生成模板子句")
    parser.add_argument("--node-set", choices=NODE_SETS, default="train", help="限制统计的节点集合")
    parser.add_argument("--checkpoint", help="从检查点读取第一层学到的子句权重")
    add_verbose_flag(parser)
    return parser


def cmd_compliance(args: argparse.Namespace) -> int:
    graph = load_dataset(args.dataset)
    schema = graph_schema(graph)
    clauses = resolve_clauses(args.clauses, schema)
    learned = None
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        learned = ckpt.matrices.get(weight_leaf_name(0))
    rows = []
    for c, clause in enumerate(clauses):
        k = class_template_index(clause, schema)
        compliance = clause_compliance(graph, k, args.node_set) if k is not None else None
        if learned is not None and c < learned.shape[1]:
            weight = float(learned[0, c])
        elif not clause.weight.learnable:
            weight = float(clause.weight.value)
        else:
            weight = float("nan")
        rows.append(ComplianceRow(render_clause(clause), weight, compliance))
    write_compliance_csv(rows, sys.stdout)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run_guarded(cmd_compliance, args)


if __name__ == "__main__":
    sys.exit(main())
