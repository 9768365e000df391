"""Fine-grained detection from coarse detections, pairwise relations and a knowledge base."""

from .annotate import AutoConfig, auto_annotate_dataset, auto_annotate_scene, training_examples
from .evaluation import EvalReport, average_precision, evaluate_map, match_detections, render_report
from .kb import KnowledgeBase, kb_contains, kb_match, kb_query, load_kb, parse_kb
from .pipeline import InferConfig, OracleRelations, build_neighborhood, infer_dataset, infer_scene, nms
from .relpredict import RelModel, TrainConfig, loss_and_grad, pair_features, predict_pair, predict_scene, train
from .scene import (Box, Dataset, Detection, Provenance, Scene, center_distance, iou, load_dataset,
                    parse_dataset, save_dataset, union_box, write_dataset)
from .synthgen import DEFAULT_KB, GenConfig, gen_dataset, gen_scene

__version__ = "0.1.0"

__all__ = [
    "AutoConfig",
    "auto_annotate_dataset",
    "auto_annotate_scene",
    "training_examples",
    "EvalReport",
    "average_precision",
    "evaluate_map",
    "match_detections",
    "render_report",
    "KnowledgeBase",
    "kb_contains",
    "kb_match",
    "kb_query",
    "load_kb",
    "parse_kb",
    "InferConfig",
    "OracleRelations",
    "build_neighborhood",
    "infer_dataset",
    "infer_scene",
    "nms",
    "RelModel",
    "TrainConfig",
    "loss_and_grad",
    "pair_features",
    "predict_pair",
    "predict_scene",
    "train",
    "Box",
    "Dataset",
    "Detection",
    "Provenance",
    "Scene",
    "center_distance",
    "iou",
    "load_dataset",
    "parse_dataset",
    "save_dataset",
    "union_box",
    "write_dataset",
    "DEFAULT_KB",
    "GenConfig",
    "gen_dataset",
    "gen_scene",
]
