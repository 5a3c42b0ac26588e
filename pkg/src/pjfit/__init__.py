"""Person-job fit: hierarchical attention matching over postings and resumes."""

from .data import Application, Caps, SplitSpec, Vocabulary
from .estimator import BagOfWordsLogistic, MeanEmbeddingLogistic, PersonJobFitClassifier
from .metrics import MetricsReport, roc_auc, threshold_metrics
from .model import AttentionTrace, ModelConfig, ModelParams, PredictionOutput, predict
from .synth import GeneratorConfig, generate
from .training import TrainConfig, train

__all__ = [
    "Application",
    "AttentionTrace",
    "BagOfWordsLogistic",
    "Caps",
    "GeneratorConfig",
    "MeanEmbeddingLogistic",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "PersonJobFitClassifier",
    "PredictionOutput",
    "SplitSpec",
    "TrainConfig",
    "Vocabulary",
    "generate",
    "predict",
    "roc_auc",
    "threshold_metrics",
    "train",
]

__version__ = "0.1.0"
