"""Continuous collaborator trust evaluation with a Structure2vec Siamese model."""
from .acfg import Acfg, NormStats, build_acfg, compute_norm_stats
from .dataset import DatasetConfig, synthesize
from .embed import ModelParams, forward, init_params, load_model, save_model
from .evaluation import TrustVerdict, auc, detection_report, evaluate_stream, roc_curve
from .siamese import PairExample, TrainConfig, cosine_similarity, pair_loss, train
from .telemetry import AnomalyKind, SlotRecord, TrustedProfile, simulate_stream

__version__ = "0.1.0"
