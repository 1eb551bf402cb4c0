"""Adversarial bandits over hierarchies of similar alternatives.

Provides the similarity-tree data model, the nested logit choice rule, the
nested importance-weighted estimator, nested exponential weights and EXP3
policies, synthetic loss environments, an experiment runner with a CLI, and
a numeric verification suite for the underlying entropy/conjugacy identities.
"""

from .tree import (
    SimilarityTree,
    TreeConstants,
    build_tree,
    dump_tree,
    lineage,
    load_tree,
    random_tree,
    symmetric_tree,
    tree_constants,
    tree_from_nodes,
    tree_to_dict,
)
from .choice import (
    SamplePath,
    ScoreState,
    UncertaintyParams,
    children_probs,
    class_prob_map,
    conditional_prob,
    leaf_distribution,
    propagate_scores,
    sample_path,
    total_prob,
)
from .estimators import (
    EstimatedIncrements,
    ExpectedMoments,
    expected_estimator_moments,
    iwe,
    niwe,
)

__all__ = [
    "SimilarityTree",
    "TreeConstants",
    "build_tree",
    "dump_tree",
    "lineage",
    "load_tree",
    "random_tree",
    "symmetric_tree",
    "tree_constants",
    "tree_from_nodes",
    "tree_to_dict",
    "SamplePath",
    "ScoreState",
    "UncertaintyParams",
    "children_probs",
    "class_prob_map",
    "conditional_prob",
    "leaf_distribution",
    "propagate_scores",
    "sample_path",
    "total_prob",
    "EstimatedIncrements",
    "ExpectedMoments",
    "expected_estimator_moments",
    "iwe",
    "niwe",
]

__version__ = "0.1.0"
