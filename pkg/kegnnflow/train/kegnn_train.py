#!/usr/bin/env python3
"""
按配置文件训练（Ke）MLP/GCN/GAT，多次运行后写出指标、汇总与检查点。
"""

import argparse
import os
import sys
from typing import List, Optional

from kegnnflow.config import load_config
from kegnnflow.console import add_verbose_flag, run_guarded
from kegnnflow.graph.graph_store import load_dataset
from kegnnflow.logic.clauses import graph_schema
from kegnnflow.train.experiment import resolve_clauses, run_experiment, write_outputs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="训练知识增强图神经网络并汇总多次运行的测试准确率")
    parser.add_argument("-c", "--config", default="input.toml", help="配置文件路径（TOML/JSON）")
    parser.add_argument("--seed", type=int, help="覆盖 train.seed")
    parser.add_argument("--runs", type=int, help="覆盖 train.runs")
    parser.add_argument("--out", help="覆盖 experiment.output_dir")
    parser.add_argument("--parallel-runs", type=int, default=1, help="并行执行的运行数")
    add_verbose_flag(parser)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    overrides = {"train.seed": args.seed, "train.runs": args.runs, "experiment.output_dir": args.out}
    cfg = load_config(args.config, overrides)
    print(f"正在读取数据集: {cfg.dataset}")
    graph = load_dataset(cfg.dataset)
    train_n, valid_n, test_n = graph.split_counts()
    print(
        f"  节点 {graph.num_nodes}，边 {graph.num_edges}，特征 {graph.num_features}，类别 {graph.num_classes}，"
        f"划分 {train_n}/{valid_n}/{test_n}"
    )
    clauses = resolve_clauses(cfg.clauses, graph_schema(graph))
    label = f"Ke{cfg.model.kind.upper()}" if cfg.ke.layers > 0 else cfg.model.kind.upper()
    print(f"模型 {label}，知识增强层 {cfg.ke.layers}，子句 {len(clauses)} 条，运行 {cfg.train.runs} 次")

    experiment = run_experiment(cfg, parallel_runs=args.parallel_runs, graph=graph, clauses=clauses)
    for r in experiment.results:
        print(f"  运行 {r.run_index}（seed {r.seed}）: {r.epochs_run} 轮，最优轮次 {r.best_epoch}，测试准确率 {r.test_accuracy:.4f}")
    paths = write_outputs(cfg, experiment, graph, clauses)
    print(f"测试准确率: {experiment.mean:.4f} ± {experiment.std:.4f}")
    print(f"结果已写入 {os.path.dirname(paths['summary.json'])}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run_guarded(cmd_train, args)


if __name__ == "__main__":
    sys.exit(main())
