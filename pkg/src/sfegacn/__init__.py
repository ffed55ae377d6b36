"""Few-shot unknown-attack detection: session feature embedding, intra-category
generation with a cooperative discriminator, and two-step cluster-then-classify
mining."""

from .classifier import DenseClassifier
from .data import LabeledSet, load_csv, save_csv, subsample, synth_generate
from .detector import DetectionConfig, KMeans, UnknownAttackDetector, detect, kmeans, metrics
from .gacn import GACN, GacnConfig, augment_all, generate, train_gacn
from .nn import DenseNet, TrainConfig
from .persistence import load_model, save_model
from .pointwalk import point_walk
from .sfe import SessionFeatureEmbedding, embed, train_embedding

__version__ = "0.1.0"

__all__ = [
    "DenseClassifier", "DenseNet", "DetectionConfig", "GACN", "GacnConfig", "KMeans", "LabeledSet",
    "SessionFeatureEmbedding", "TrainConfig", "UnknownAttackDetector", "augment_all",
    "detect", "embed", "generate", "kmeans", "load_csv", "load_model", "metrics",
    "point_walk", "save_csv", "save_model", "subsample", "synth_generate",
    "train_embedding", "train_gacn",
]
