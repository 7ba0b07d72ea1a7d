"""Label ranking with adaptive multi-hyperplane machines.

The package provides the AMM-rank online learner, the multiclass AMM it
extends, aggregation and regression baselines, ranking metrics, and an
event-log featurization pipeline with a synthetic corpus generator.
"""

from .amm_model import AmmModel, TrainConfig, predict_ranking, predict_rankings
from .amm_multiclass import train_multiclass
from .amm_rank import train_rank
from .core import RankedDataset, SparseVector, parse_ranked_dataset, serialize_ranked_dataset
from .metrics import EvalReport, disagreement_error, evaluate, topk_metrics

__all__ = [
    "AmmModel", "TrainConfig", "predict_ranking", "predict_rankings", "train_multiclass",
    "train_rank", "RankedDataset", "SparseVector", "parse_ranked_dataset",
    "serialize_ranked_dataset", "EvalReport", "disagreement_error", "evaluate", "topk_metrics",
]

__version__ = "0.1.0"
