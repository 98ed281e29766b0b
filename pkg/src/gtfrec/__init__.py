"""Trend-filtered collaborative filtering on the user-item bipartite graph."""

from ._kernels import BACKEND as kernel_backend
from .filtering import (FilterConfig, FilterTrace, clip_prox, gtcf_filter,
                        gtf_objective, laplacian_propagate, soft_threshold)
from .graph import (InteractionGraph, apply_incidence, build_graph,
                    build_incidence, build_propagation)
from .training import (ModelState, TrainConfig, adam_step, backward_gtcf,
                       bpr_loss, init_embeddings, sample_triples, train_epoch)

__version__ = "0.1.0"

__all__ = [
    "FilterConfig", "FilterTrace", "InteractionGraph", "ModelState",
    "TrainConfig", "adam_step", "apply_incidence", "backward_gtcf",
    "bpr_loss", "build_graph", "build_incidence", "build_propagation",
    "clip_prox", "gtcf_filter", "gtf_objective", "init_embeddings",
    "kernel_backend", "laplacian_propagate", "sample_triples",
    "soft_threshold", "train_epoch",
]
