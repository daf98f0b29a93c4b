"""
多次运行的实验协议、结果文件，以及子句权重与 compliance 的对照表。

输出目录内容：
- effective_config.toml  补全默认值后的配置
- metrics.jsonl          每次运行每轮一行，键有序，不含耗时（重跑逐字节一致）
- timings.jsonl          每次运行每轮的耗时（秒）
- clause_weights.csv     run,epoch,layer,clause,weight
- weight_compliance.csv  clause,weight,compliance
- summary.json           测试准确率均值/标准差、每轮平均耗时、Spearman 相关
- checkpoint.txt         第 0 次运行的参数
"""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from kegnnflow.compliance.compliance import clause_compliance, format_compliance
from kegnnflow.config import ExperimentConfig, write_config
from kegnnflow.errors import ConfigError, DataError
from kegnnflow.graph.graph_store import Graph, load_dataset
from kegnnflow.logic.clauses import (
    TEMPLATE,
    Clause,
    PredicateSchema,
    class_template_index,
    graph_schema,
    instantiate_class_template,
    load_clauses,
    render_clause,
    validate,
)
from kegnnflow.models.checkpoint import Checkpoint, save_checkpoint
from kegnnflow.models.knowledge_layer import weight_leaf_name
from kegnnflow.train.harness import RunResult, train

logger = logging.getLogger(__name__)


@dataclass
class ExperimentResult:
    mean: float
    std: float
    results: List[RunResult]

    @property
    def accuracies(self) -> List[float]:
        return [r.test_accuracy for r in self.results]


@dataclass
class ComplianceRow:
    clause: str
    weight: float
    compliance: Optional[float]


def resolve_clauses(source: str, schema: PredicateSchema) -> List[Clause]:
    """source 为 "template" 时按类别生成同质性子句，否则读取子句文件并按模式校验。"""
    if source == TEMPLATE:
        return instantiate_class_template(schema)
    clauses = load_clauses(source)
    result = validate(clauses, schema)
    if not result.ok:
        raise DataError(f"{source}: 子句与谓词模式不符:\n  " + "\n  ".join(result.errors))
    return clauses


def aggregate(accuracies: Sequence[float]):
    """均值与样本标准差（单次运行时标准差为 0）。"""
    values = np.asarray(accuracies, dtype=np.float64)
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return float(values.mean()), std


def _run_one(graph, cfg: ExperimentConfig, clauses, schema, run_index: int) -> RunResult:
    train_cfg = replace(cfg.train, seed=cfg.train.seed + run_index)
    return train(graph, cfg.model, clauses, cfg.ke, train_cfg, schema, run_index)


def run_experiment(
    cfg: ExperimentConfig,
    runs: Optional[int] = None,
    parallel_runs: int = 1,
    graph: Optional[Graph] = None,
    clauses: Optional[List[Clause]] = None,
) -> ExperimentResult:
    runs = cfg.train.runs if runs is None else runs
    if runs < 1:
        raise ConfigError(f"运行次数必须 >= 1，得到 {runs}")
    if parallel_runs < 1:
        raise ConfigError(f"--parallel-runs 必须 >= 1，得到 {parallel_runs}")
    graph = load_dataset(cfg.dataset) if graph is None else graph
    schema = graph_schema(graph)
    clauses = resolve_clauses(cfg.clauses, schema) if clauses is None else clauses

    if parallel_runs == 1:
        results = [_run_one(graph, cfg, clauses, schema, idx) for idx in range(runs)]
    else:
        with ProcessPoolExecutor(max_workers=parallel_runs) as pool:
            futures = [pool.submit(_run_one, graph, cfg, clauses, schema, idx) for idx in range(runs)]
            results = [f.result() for f in futures]
    results.sort(key=lambda r: r.run_index)
    mean, std = aggregate([r.test_accuracy for r in results])
    logger.info("%d 次运行: 测试准确率 %.4f ± %.4f", runs, mean, std)
    return ExperimentResult(mean, std, results)


def rank_correlation(weights: Sequence[float], compliance: Sequence[Optional[float]]) -> Optional[float]:
    pairs = [(w, c) for w, c in zip(weights, compliance) if c is not None]
    if len(pairs) < 2:
        return None
    rho, _ = stats.spearmanr([p[0] for p in pairs], [p[1] for p in pairs])
    rho = float(rho)
    return None if np.isnan(rho) else rho


def weight_compliance_report(
    results: Sequence[RunResult],
    graph: Graph,
    clauses: Sequence[Clause],
    schema: Optional[PredicateSchema] = None,
    node_set: str = "train",
) -> List[ComplianceRow]:
    """每个子句一行：第一个知识增强层的权重（各次运行取平均）与训练集 compliance。

    非类别模板形式的子句 compliance 记为未定义。
    """
    schema = schema or graph_schema(graph)
    rows = []
    layered = [r.clause_weights for r in results if r.clause_weights.shape[0] > 0]
    for c, clause in enumerate(clauses):
        k = class_template_index(clause, schema)
        compliance = clause_compliance(graph, k, node_set) if k is not None else None
        weight = float(np.mean([w[0, c] for w in layered])) if layered else float("nan")
        rows.append(ComplianceRow(render_clause(clause), weight, compliance))
    return rows


def per_run_correlations(results: Sequence[RunResult], graph: Graph, clauses: Sequence[Clause]) -> List[Optional[float]]:
    schema = graph_schema(graph)
    indices = [class_template_index(c, schema) for c in clauses]
    compliance = [clause_compliance(graph, k, "train") if k is not None else None for k in indices]
    out = []
    for r in results:
        if r.clause_weights.shape[0] == 0:
            out.append(None)
            continue
        out.append(rank_correlation(list(r.clause_weights[0]), compliance))
    return out


def write_compliance_csv(rows: Sequence[ComplianceRow], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["clause", "weight", "compliance"])
    for row in rows:
        writer.writerow([row.clause, repr(row.weight), format_compliance(row.compliance)])


def _json_line(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, sort_keys=True) + "\n"


def write_outputs(
    cfg: ExperimentConfig,
    experiment: ExperimentResult,
    graph: Graph,
    clauses: Sequence[Clause],
    out_dir: Optional[str] = None,
) -> Dict[str, str]:
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        name: os.path.join(out_dir, name)
        for name in (
            "effective_config.toml",
            "metrics.jsonl",
            "timings.jsonl",
            "clause_weights.csv",
            "weight_compliance.csv",
            "summary.json",
            "checkpoint.txt",
        )
    }
    write_config(cfg, paths["effective_config.toml"])

    with open(paths["metrics.jsonl"], "w", encoding="utf-8") as f:
        for r in experiment.results:
            for record in r.history:
                f.write(_json_line({"run": r.run_index, "seed": r.seed, **record.to_dict()}))
            f.write(
                _json_line(
                    {
                        "run": r.run_index,
                        "seed": r.seed,
                        "best_epoch": r.best_epoch,
                        "epochs_run": r.epochs_run,
                        "test_accuracy": r.test_accuracy,
                    }
                )
            )

    with open(paths["timings.jsonl"], "w", encoding="utf-8") as f:
        for r in experiment.results:
            for epoch, seconds in enumerate(r.epoch_times, start=1):
                f.write(_json_line({"run": r.run_index, "epoch": epoch, "seconds": seconds}))

    with open(paths["clause_weights.csv"], "w", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["run", "epoch", "layer", "clause", "weight"])
        for r in experiment.results:
            for epoch, values in enumerate(r.clause_weight_history, start=1):
                for layer in range(values.shape[0]):
                    for c in range(values.shape[1]):
                        writer.writerow([r.run_index, epoch, layer, c, repr(float(values[layer, c]))])

    rows = weight_compliance_report(experiment.results, graph, clauses)
    with open(paths["weight_compliance.csv"], "w", encoding="utf-8") as f:
        write_compliance_csv(rows, f)

    correlations = per_run_correlations(experiment.results, graph, clauses)
    summary = {
        "name": cfg.name,
        "runs": len(experiment.results),
        "test_accuracy_mean": experiment.mean,
        "test_accuracy_std": experiment.std,
        "test_accuracies": experiment.accuracies,
        "mean_epoch_seconds": float(np.mean([r.mean_epoch_seconds for r in experiment.results])),
        "spearman_weight_compliance": correlations,
    }
    with open(paths["summary.json"], "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

    first = experiment.results[0]
    matrices = dict(first.model_params.weights) if first.model_params else {}
    if first.model_params:
        matrices.update(first.model_params.buffers)
    for layer in range(first.clause_weights.shape[0]):
        matrices[weight_leaf_name(layer)] = first.clause_weights[layer: layer + 1]
    flat = cfg.to_flat()
    flat["train.seed"] = first.seed
    save_checkpoint(paths["checkpoint.txt"], Checkpoint(flat, list(clauses) if first.clause_weights.shape[0] else [], matrices))
    return paths
