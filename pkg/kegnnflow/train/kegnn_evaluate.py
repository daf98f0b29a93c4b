#!/usr/bin/env python3
"""
用检查点在数据集上评估，输出一行 JSON 准确率记录。
"""

import argparse
import json
import sys
from typing import List, Optional

from kegnnflow.config import config_from_flat
from kegnnflow.console import add_verbose_flag, run_guarded
from kegnnflow.errors import DataError
from kegnnflow.graph.graph_store import NODE_SETS, Graph, load_dataset
from kegnnflow.models.checkpoint import Checkpoint, load_checkpoint
from kegnnflow.train.harness import EnhancedModel, accuracy


def restore_model(ckpt: Checkpoint, graph: Graph) -> EnhancedModel:
    cfg = config_from_flat(ckpt.config, check_paths=False)
    model = EnhancedModel(graph, cfg.model, ckpt.clauses, cfg.ke, cfg.train.seed)
    if ckpt.clauses and model.weights.layers != cfg.ke.layers:
        raise DataError("检查点中的子句权重层数与配置不一致")
    model.load_matrices(ckpt.matrices)
    return model


def evaluate_checkpoint(checkpoint: str, dataset: Optional[str] = None, node_set: str = "test") -> dict:
    ckpt = load_checkpoint(checkpoint)
    dataset = dataset or ckpt.config.get("experiment.dataset")
    if not dataset:
        raise DataError("检查点未记录数据集路径，请用 --dataset 指定")
    graph = load_dataset(dataset)
    model = restore_model(ckpt, graph)
    z = model.predict()
    return {
        "accuracy": accuracy(z, graph.labels, graph.mask(node_set)),
        "checkpoint": checkpoint,
        "dataset": dataset,
        "node_set": node_set,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="用检查点评估测试准确率")
    parser.add_argument("checkpoint", help="检查点文件（kegnn train 输出的 checkpoint.txt）")
    parser.add_argument("-d", "--dataset", help="数据集目录（默认取检查点中的路径）")
    parser.add_argument("--node-set", choices=NODE_SETS, default="test", help="评估的节点集合")
    add_verbose_flag(parser)
    return parser


def cmd_evaluate(args: argparse.Namespace) -> int:
    record = evaluate_checkpoint(args.checkpoint, args.dataset, args.node_set)
    print(json.dumps(record, sort_keys=True, ensure_ascii=False))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run_guarded(cmd_evaluate, args)


if __name__ == "__main__":
    sys.exit(main())
