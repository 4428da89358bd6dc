"""Locally isometric deep manifold learning: encoders, autoencoders and embedding metrics."""

from .datasets import PointCloud, make_s_curve, make_spheres, make_swiss_roll
from .geometry import knn_neighborhood, pairwise_distances, rball_neighborhood
from .metrics import MetricConfig, MetricReport, aggregate, evaluate
from .net import Architecture, forward_all, init_params
from .trainer import TrainConfig, encode, generate, preset, train_ml_ae, train_ml_enc

__all__ = [
    "Architecture", "MetricConfig", "MetricReport", "PointCloud", "TrainConfig",
    "aggregate", "encode", "evaluate", "forward_all", "generate", "init_params",
    "knn_neighborhood", "make_s_curve", "make_spheres", "make_swiss_roll",
    "pairwise_distances", "preset", "rball_neighborhood", "train_ml_ae", "train_ml_enc",
]
