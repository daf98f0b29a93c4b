from kegnnflow.models.base_networks import BaseNetwork, ModelConfig, ModelParams, build_model
from kegnnflow.models.knowledge_layer import (
    ClauseWeights,
    GroundingTable,
    KnowledgeConfig,
    KnowledgeStack,
    build_grounding_table,
    clause_boost,
    clip_clause_weights,
    group_by_scatter,
    ke_layer_forward,
    stack_forward,
)

__all__ = [
    "BaseNetwork",
    "ClauseWeights",
    "GroundingTable",
    "KnowledgeConfig",
    "KnowledgeStack",
    "ModelConfig",
    "ModelParams",
    "build_grounding_table",
    "build_model",
    "clause_boost",
    "clip_clause_weights",
    "group_by_scatter",
    "ke_layer_forward",
    "stack_forward",
]
