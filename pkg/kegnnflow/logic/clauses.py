"""
子句语言：解析、渲染、模式校验与按类别实例化的同质性子句模板。

语法（每行一个子句，# 之后为注释）：
    WEIGHT:lit,lit,...
    WEIGHT  = "_"（可学习，初值取配置）| 实数（固定权重）
    lit     = ["n"] Name "(" var ["," var] ")"，var ∈ {x, y}
谓词名以大写字母开头；以 "n" 加大写字母开头的文字表示否定，例如 nAI(x) 即 ¬AI(x)。
"""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import pyparsing as pp

from kegnnflow.errors import ClauseSyntaxError, DataError

logger = logging.getLogger(__name__)

VARIABLES = ("x", "y")
TEMPLATE = "template"
_PREDICATE_NAME = re.compile(r"[A-Z][A-Za-z0-9_]*")


@dataclass(frozen=True)
class Literal:
    positive: bool
    predicate: str
    variables: Tuple[str, ...]

    @property
    def sign(self) -> int:
        return 1 if self.positive else -1

    @property
    def arity(self) -> int:
        return len(self.variables)

    def key(self):
        return (self.positive, self.predicate, self.variables)


@dataclass(frozen=True)
class WeightSpec:
    learnable: bool
    value: Optional[float] = None  # 固定权重的值；可学习权重为 None 时取配置中的初值

    @classmethod
    def fixed(cls, value: float) -> "WeightSpec":
        return cls(False, float(value))

    @classmethod
    def trainable(cls, initial: Optional[float] = None) -> "WeightSpec":
        return cls(True, None if initial is None else float(initial))


@dataclass(frozen=True)
class Clause:
    literals: Tuple[Literal, ...]
    weight: WeightSpec = WeightSpec.trainable()
    line: Optional[int] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.literals:
            raise DataError("子句至少需要一个文字")
        keys = [lit.key() for lit in self.literals]
        if len(set(keys)) != len(keys):
            raise DataError(f"子句包含重复文字: {render_clause(self)}")

    def __str__(self):
        return render_clause(self)


@dataclass(frozen=True)
class PredicateSchema:
    """一元谓词按类别编号排列（第 k 个对应标签 k），外加唯一的二元链接谓词。"""

    unary: Tuple[str, ...]
    binary: str = "Link"

    def __post_init__(self):
        names = list(self.unary) + [self.binary]
        for name in names:
            # 小写开头会与否定前缀 n 混淆
            if not _PREDICATE_NAME.fullmatch(name or ""):
                raise DataError(f"谓词名必须以大写字母开头且只含字母数字下划线: {name!r}")
        if len(set(names)) != len(names):
            raise DataError(f"谓词名重复: {names}")

    @property
    def num_classes(self) -> int:
        return len(self.unary)

    def arity(self, name: str) -> Optional[int]:
        if name == self.binary:
            return 2
        if name in self.unary:
            return 1
        return None

    def class_index(self, name: str) -> int:
        return self.unary.index(name)


def default_schema(num_classes: int, link: str = "Link") -> PredicateSchema:
    return PredicateSchema(tuple(f"C{k}" for k in range(num_classes)), link)


def graph_schema(graph) -> PredicateSchema:
    """数据集 meta 给出 predicates/link 时用这些名称，否则为 C0, C1, ... 与 Link。"""
    if graph.class_names:
        return PredicateSchema(tuple(graph.class_names), graph.link_name)
    return default_schema(graph.num_classes, graph.link_name)


@dataclass
class ValidationResult:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _literal_token(s, loc, toks):
    return [(loc, toks[0], tuple(toks[1:]))]


def _build_grammar():
    name = pp.Word(pp.alphas, pp.alphanums + "_")
    weight = pp.Literal("_") | pp.pyparsing_common.fnumber
    literal = (
        name + pp.Suppress("(") + name + pp.ZeroOrMore(pp.Suppress(",") + name) + pp.Suppress(")")
    ).set_parse_action(_literal_token)
    literals = literal + pp.ZeroOrMore(pp.Suppress(",") + literal)
    return weight("weight") + pp.Suppress(":") + pp.Group(literals)("literals") + pp.StringEnd()


_GRAMMAR = _build_grammar()


def _split_negation(token: str) -> Tuple[bool, str]:
    if len(token) > 1 and token[0] == "n" and token[1].isupper():
        return False, token[1:]
    return True, token


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0]


def parse_clause_line(text: str, lineno: int = 1) -> Clause:
    body = _strip_comment(text)
    if body.strip().endswith(":"):
        raise ClauseSyntaxError("空子句", lineno, len(body.rstrip()) + 1)
    try:
        parsed = _GRAMMAR.parse_string(body, parse_all=True)
    except pp.ParseException as exc:
        raise ClauseSyntaxError(f"无法解析: {exc.msg}", lineno, exc.col) from None

    if parsed["weight"] == "_":
        weight = WeightSpec.trainable()
    else:
        weight = WeightSpec.fixed(parsed["weight"])

    literals = []
    seen = set()
    for start, token, variables in parsed["literals"]:
        column = start + 1
        if len(variables) > 2:
            raise ClauseSyntaxError(f"文字 {token} 的元数为 {len(variables)}，最多为 2", lineno, column)
        for var in variables:
            if var not in VARIABLES:
                raise ClauseSyntaxError(f"变量 {var!r} 不在 {{x, y}} 中", lineno, column)
        if len(variables) == 2 and variables[0] == variables[1]:
            raise ClauseSyntaxError(f"二元文字 {token} 的两个变量相同", lineno, column)
        positive, predicate = _split_negation(token)
        lit = Literal(positive, predicate, variables)
        if lit.key() in seen:
            raise ClauseSyntaxError(f"重复文字 {token}", lineno, column)
        seen.add(lit.key())
        literals.append(lit)
    return Clause(tuple(literals), weight, line=lineno)


def parse_clauses(text: str) -> List[Clause]:
    clauses = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not _strip_comment(line).strip():
            continue
        clauses.append(parse_clause_line(line, lineno))
    return clauses


def load_clauses(path: str) -> List[Clause]:
    if not os.path.exists(path):
        raise DataError(f"找不到子句文件: {path}")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        return parse_clauses(text)
    except ClauseSyntaxError as exc:
        raise ClauseSyntaxError(f"{path}: {exc}", exc.line, exc.column) from None


def render_literal(lit: Literal) -> str:
    return f"{'' if lit.positive else 'n'}{lit.predicate}({','.join(lit.variables)})"


def render_clause(clause: Clause) -> str:
    if clause.weight.learnable:
        head = "_"
    else:
        head = repr(float(clause.weight.value))
    return f"{head}:{','.join(render_literal(lit) for lit in clause.literals)}"


def validate(clauses: Sequence[Clause], schema: PredicateSchema) -> ValidationResult:
    result = ValidationResult()
    for idx, clause in enumerate(clauses):
        where = f"第 {clause.line} 行" if clause.line is not None else f"子句 #{idx}"
        has_unary = False
        for pos, lit in enumerate(clause.literals, start=1):
            expected = schema.arity(lit.predicate)
            if expected is None:
                result.errors.append(f"{where} 文字 {pos}: 未知谓词 {lit.predicate}")
                continue
            if lit.arity != expected:
                result.errors.append(
                    f"{where} 文字 {pos}: 谓词 {lit.predicate} 的元数应为 {expected}，得到 {lit.arity}"
                )
                continue
            if any(v not in VARIABLES for v in lit.variables):
                result.errors.append(f"{where} 文字 {pos}: 变量必须取自 {{x, y}}")
                continue
            if expected == 2 and lit.variables != ("x", "y"):
                result.errors.append(f"{where} 文字 {pos}: 二元谓词 {lit.predicate} 必须作用于 (x,y)")
            if expected == 1:
                has_unary = True
        if not clause.weight.learnable and clause.weight.value is not None and clause.weight.value < 0:
            result.errors.append(f"{where}: 固定权重必须 >= 0")
        if not has_unary:
            result.warnings.append(f"{where}: 子句不含一元文字，对预测没有影响")
    for message in result.warnings:
        logger.warning(message)
    return result


def instantiate_class_template(schema: PredicateSchema) -> List[Clause]:
    """每个类别 C 生成 ∀xy: ¬C(x) ∨ ¬Link(x,y) ∨ C(y)，权重可学习。"""
    return [
        Clause(
            (
                Literal(False, name, ("x",)),
                Literal(False, schema.binary, ("x", "y")),
                Literal(True, name, ("y",)),
            ),
            WeightSpec.trainable(),
        )
        for name in schema.unary
    ]


def class_template_index(clause: Clause, schema: PredicateSchema) -> Optional[int]:
    """若子句形如 ¬C(x) ∨ ¬Link(x,y) ∨ C(y)，返回 C 的类别编号，否则返回 None。"""
    lits = clause.literals
    if len(lits) != 3:
        return None
    a, link, b = lits
    if (
        not a.positive
        and not link.positive
        and b.positive
        and link.predicate == schema.binary
        and link.variables == ("x", "y")
        and a.predicate == b.predicate
        and a.predicate in schema.unary
        and a.variables == ("x",)
        and b.variables == ("y",)
    ):
        return schema.class_index(a.predicate)
    return None
