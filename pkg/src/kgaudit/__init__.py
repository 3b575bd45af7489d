"""Knowledge-graph error detection via cross-view contrastive triple encoding."""

from .corrupt import InjectionError, corruption_report, inject_errors
from .detect import (BaselineEmbeddings, ConfidenceRanking, baseline_score,
                     metrics_rows, precision_recall_at_k, score_all, train_baseline)
from .encoder import Hyper, ModelState, attend, encode_local, encode_views, init_model
from .kgstore import (GraphFormatError, KnowledgeGraph, Triple, graph_stats,
                      load_graph, write_graph)
from .training import TrainConfig, TrainLog, contrastive_loss, energy, kge_loss, train
from .views import TripleViewGraph, build_views, neighbor_budget

__version__ = "0.1.0"

__all__ = [
    "BaselineEmbeddings", "ConfidenceRanking", "GraphFormatError", "Hyper",
    "InjectionError", "KnowledgeGraph", "ModelState", "TrainConfig", "TrainLog",
    "Triple", "TripleViewGraph", "attend", "baseline_score", "build_views",
    "contrastive_loss", "corruption_report", "encode_local", "encode_views",
    "energy", "graph_stats", "init_model", "inject_errors", "kge_loss",
    "load_graph", "metrics_rows", "neighbor_budget", "precision_recall_at_k",
    "score_all", "train", "train_baseline", "write_graph",
]
