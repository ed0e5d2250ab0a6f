"""Behavior-graph embeddings jointly trained with a multi-interest CTR model.

The package turns raw click/query behavior logs into (a) typed positive
pairs for sampled-softmax embedding learning over an implicit
query-item graph, and (b) similarity-derived features for a CTR
prediction head, trained together over the same input stream.
"""

from .config import RunConfig
from .ctr_net import JointLossConfig, MlpParams, TrainResult, train
from .datagen import GenConfig, generate_labeled_samples, generate_log
from .embed_learn import EmbeddingTable, batch_graph_loss, softmax_edge_loss
from .evaluate import EvalReport, auc, relaimpr, run_ablations
from .graph_edges import Edge, EdgeConfig, EdgeKind, EntityType, build_all_edges
from .ingest import BehaviorEvent, BehaviorSequence, EventKind, TrainingSample
from .multi_interest import BinningScheme, SimFeature, build_features, sim_extract
from .neg_sampling import NegQueue

__version__ = "0.1.0"

__all__ = [
    "BehaviorEvent", "BehaviorSequence", "BinningScheme", "Edge", "EdgeConfig",
    "EdgeKind", "EmbeddingTable", "EntityType", "EvalReport", "EventKind",
    "GenConfig", "JointLossConfig", "MlpParams", "NegQueue", "RunConfig",
    "SimFeature", "TrainingSample", "TrainResult", "auc", "batch_graph_loss",
    "build_all_edges", "build_features", "generate_labeled_samples",
    "generate_log", "relaimpr", "run_ablations", "sim_extract",
    "softmax_edge_loss", "train",
]
