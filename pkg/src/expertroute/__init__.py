"""Expertise-aware recruitment and multi-layer collaboration over a pool of
chat-completion backends, with profiling, evaluation and ablation tooling."""

from .backends import BackendSpec, HttpBackend, ScriptedBackend, Step, load_pool
from .collaboration import CollabConfig, CollabTranscript, run_pipeline
from .expertise import ExpertiseTable, build_table, evaluate_pool, load_table, pseudo_label, save_table
from .recruitment import RecruitmentConfig, recruit, score_backends, select_classifier
from .taxonomy import ClassificationPrediction, Department, Difficulty, QueryRecord

__all__ = [
    "BackendSpec", "HttpBackend", "ScriptedBackend", "Step", "load_pool",
    "CollabConfig", "CollabTranscript", "run_pipeline",
    "ExpertiseTable", "build_table", "evaluate_pool", "load_table", "pseudo_label", "save_table",
    "RecruitmentConfig", "recruit", "score_backends", "select_classifier",
    "ClassificationPrediction", "Department", "Difficulty", "QueryRecord",
]
__version__ = "0.1.0"
