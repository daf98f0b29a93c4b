from kegnnflow.logic.clauses import (
    Clause,
    Literal,
    PredicateSchema,
    WeightSpec,
    default_schema,
    graph_schema,
    instantiate_class_template,
    load_clauses,
    parse_clauses,
    render_clause,
    validate,
)
from kegnnflow.logic.fuzzy import clause_truth, fuzzy_not, godel_tconorm, literal_preactivation_sign, literal_truth

__all__ = [
    "Clause",
    "Literal",
    "PredicateSchema",
    "WeightSpec",
    "clause_truth",
    "default_schema",
    "fuzzy_not",
    "godel_tconorm",
    "graph_schema",
    "instantiate_class_template",
    "literal_preactivation_sign",
    "literal_truth",
    "load_clauses",
    "parse_clauses",
    "render_clause",
    "validate",
]
