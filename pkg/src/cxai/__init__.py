"""Concept-based contrastive explanations for binary image classification."""

from .contrastive import (
    ContrastiveExplanation,
    Explainer,
    RankedConcepts,
    RelevanceRange,
    SimilarityMatch,
    best_match,
    explain,
    rank_and_partition,
    render,
    unique_difference,
)
from .crp import ConceptAttribution, concept_scores, heatmap, lrp_backward
from .network import Dataset, Instance, Network, TrainConfig, build_network, embedding, forward, gradients, train
from .stats import StatTestResult, anova_oneway, t_paired

__all__ = [
    "ConceptAttribution",
    "ContrastiveExplanation",
    "Dataset",
    "Explainer",
    "Instance",
    "Network",
    "RankedConcepts",
    "RelevanceRange",
    "SimilarityMatch",
    "StatTestResult",
    "TrainConfig",
    "anova_oneway",
    "best_match",
    "build_network",
    "concept_scores",
    "embedding",
    "explain",
    "forward",
    "gradients",
    "heatmap",
    "lrp_backward",
    "rank_and_partition",
    "render",
    "t_paired",
    "train",
    "unique_difference",
]

__version__ = "0.1.0"
