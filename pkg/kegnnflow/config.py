"""
实验配置：TOML（或 JSON）中的 [experiment] [model] [train] [ke] 四张表。

内部统一使用带点的扁平键（例如 model.hidden_channels）；未知的表或键都是配置错误。
数据集与子句文件的相对路径相对于配置文件所在目录解析。
"""

import json
import os
from dataclasses import dataclass
from typing import Any, Dict, Optional

from kegnnflow.errors import ConfigError
from kegnnflow.logic.clauses import TEMPLATE
from kegnnflow.models.base_networks import ModelConfig
from kegnnflow.models.knowledge_layer import KnowledgeConfig
from kegnnflow.train.harness import TrainConfig

try:
    import tomllib  # Python 3.11+
except ImportError:
    tomllib = None
    try:
        import toml  # type: ignore
    except ImportError:
        toml = None

# 扁平键 -> (默认值, 类型)
CONFIG_KEYS: Dict[str, tuple] = {
    "experiment.dataset": (None, "path"),
    "experiment.clauses": (TEMPLATE, "path"),
    "experiment.output_dir": ("kegnn_out", "str"),
    "experiment.name": ("", "str"),
    "model.kind": ("mlp", "str"),
    "model.hidden_layers": (2, "int"),
    "model.hidden_channels": (64, "int"),
    "model.attention_heads": (1, "int"),
    "model.dropout_rate": (0.5, "float"),
    "model.use_batch_norm": (True, "bool"),
    "model.normalize_edges": (True, "bool"),
    "train.epochs": (200, "int"),
    "train.learning_rate": (0.01, "float"),
    "train.batch_size": ("full", "batch"),
    "train.early_stopping": (True, "bool"),
    "train.min_delta": (0.001, "float"),
    "train.patience": (10, "int"),
    "train.edges_drop_rate": (0.0, "float"),
    "train.seed": (1234, "int"),
    "train.runs": (1, "int"),
    "train.adam_beta1": (0.9, "float"),
    "train.adam_beta2": (0.99, "float"),
    "train.adam_epsilon": (1e-7, "float"),
    "train.loss": ("ce", "str"),
    "ke.layers": (0, "int"),
    "ke.clause_weight_init": (0.5, "init"),
    "ke.binary_preactivation": (500.0, "float"),
    "ke.min_clause_weight": (0.0, "float"),
    "ke.max_clause_weight": (500.0, "float"),
    "ke.literal_signs": ("signed", "str"),
}
SECTIONS = ("experiment", "model", "train", "ke")


@dataclass
class ExperimentConfig:
    dataset: str
    clauses: str
    output_dir: str
    name: str
    model: ModelConfig
    train: TrainConfig
    ke: KnowledgeConfig

    @property
    def ke_layers(self) -> int:
        return self.ke.layers

    def to_flat(self) -> Dict[str, Any]:
        flat: Dict[str, Any] = {
            "experiment.dataset": self.dataset,
            "experiment.clauses": self.clauses,
            "experiment.output_dir": self.output_dir,
            "experiment.name": self.name,
        }
        for section, obj in (("model", self.model), ("train", self.train), ("ke", self.ke)):
            for key in CONFIG_KEYS:
                if key.startswith(section + "."):
                    flat[key] = getattr(obj, key.split(".", 1)[1])
        return flat


def read_config_file(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"找不到配置文件: {path}")
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: JSON 解析失败: {exc.msg}（第 {exc.lineno} 行）") from None
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        if tomllib:
            return tomllib.loads(text)
        if toml:
            return toml.loads(text)
    except Exception as exc:
        raise ConfigError(f"{path}: TOML 解析失败: {exc}") from None
    raise ConfigError("缺少 tomllib/toml 模块，无法读取配置。")


def flatten(nested: Dict[str, Any]) -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for section, table in nested.items():
        if section not in SECTIONS:
            raise ConfigError(f"未知的配置表 [{section}]（可选 {', '.join(SECTIONS)}）")
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] 必须是一张表")
        for key, value in table.items():
            dotted = f"{section}.{key}"
            if dotted not in CONFIG_KEYS:
                raise ConfigError(f"未知的配置键: {dotted}")
            flat[dotted] = value
    return flat


def _coerce(key: str, value: Any, kind: str) -> Any:
    if kind in ("str", "path"):
        if not isinstance(value, str):
            raise ConfigError(f"{key} 必须是字符串，得到 {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key} 必须是 true/false，得到 {value!r}")
        return value
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} 必须是整数，得到 {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} 必须是实数，得到 {value!r}")
        return float(value)
    if kind == "batch":
        if value == "full":
            return value
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} 必须是 \"full\" 或正整数，得到 {value!r}")
        return value
    if value == "random":
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} 必须是实数或 \"random\"，得到 {value!r}")
    return float(value)


def _resolve_path(value: str, base_dir: str) -> str:
    if value == TEMPLATE or os.path.isabs(value):
        return value
    return os.path.normpath(os.path.join(base_dir, value))


def config_from_flat(
    flat: Dict[str, Any], base_dir: str = ".", check_paths: bool = True, default_name: str = "experiment"
) -> ExperimentConfig:
    values: Dict[str, Any] = {}
    for key, (default, kind) in CONFIG_KEYS.items():
        if key in flat:
            values[key] = _coerce(key, flat[key], kind)
        else:
            values[key] = default
    for key in flat:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"未知的配置键: {key}")
    if values["experiment.dataset"] is None:
        raise ConfigError("缺少必填项 experiment.dataset")
    for key in ("experiment.dataset", "experiment.clauses"):
        values[key] = _resolve_path(values[key], base_dir)
        if check_paths and values[key] != TEMPLATE and not os.path.exists(values[key]):
            raise ConfigError(f"{key} 指向的路径不存在: {values[key]}")

    def section(name: str) -> Dict[str, Any]:
        return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(name + ".")}

    return ExperimentConfig(
        dataset=values["experiment.dataset"],
        clauses=values["experiment.clauses"],
        output_dir=values["experiment.output_dir"],
        name=values["experiment.name"] or default_name,
        model=ModelConfig(**section("model")),
        train=TrainConfig(**section("train")),
        ke=KnowledgeConfig(**section("ke")),
    )


def load_config(path: str, overrides: Optional[Dict[str, Any]] = None, check_paths: bool = True) -> ExperimentConfig:
    """读取配置文件，合并命令行覆盖项（扁平键），补全默认值并校验。"""
    flat = flatten(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            flat[key] = value
    base_dir = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    return config_from_flat(flat, base_dir, check_paths, default_name=stem)


def format_toml_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return json.dumps(str(value), ensure_ascii=False)


def render_config(cfg: ExperimentConfig) -> str:
    flat = cfg.to_flat()
    chunks = []
    for section in SECTIONS:
        chunks.append(f"[{section}]")
        for key, value in flat.items():
            head, name = key.split(".", 1)
            if head == section:
                chunks.append(f"{name} = {format_toml_value(value)}")
        chunks.append("")
    return "\n".join(chunks)


def write_config(cfg: ExperimentConfig, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_config(cfg))
