"""Kinship verification over pre-extracted face embeddings.

Siamese and triplet similarity heads with algebraic feature fusion, BCE and
focal losses, jury-system ensembling and per-relationship accuracy reports.
"""
__version__ = "0.1.0"

from .estimators import JuryVerifier, SiameseVerifier, TripletVerifier
from .fusion import FusionKind, fuse, output_dim
from .heads import SiameseHead, TripletModel, head_forward, init_head, predict, triplet_forward, triplet_score
from .jury import JuryConfig, jury_eval, jury_predict
from .losses import LossKind, bce, focal

__all__ = [
    "FusionKind",
    "JuryConfig",
    "JuryVerifier",
    "LossKind",
    "SiameseHead",
    "SiameseVerifier",
    "TripletModel",
    "TripletVerifier",
    "bce",
    "focal",
    "fuse",
    "head_forward",
    "init_head",
    "jury_eval",
    "jury_predict",
    "output_dim",
    "predict",
    "triplet_forward",
    "triplet_score",
]
