"""Learning stratified mixtures of manifolds by slab co-detection."""
from .core import LayerDetection, StratificationResult, codetect_dimension, prune_pass, run
from .estimator import Slabeling
from .geometry import DegenerateError, Slab, Subspace, orthonormalize, subspace_angle
from .params import ModelConstants, ParamSchedule, default_schedule, practical_schedule
from .samplers import ManifoldSpec, PointCloud, sample_mixture, sample_preset

__all__ = [
    "DegenerateError", "LayerDetection", "ManifoldSpec", "ModelConstants", "ParamSchedule", "PointCloud",
    "Slab", "Slabeling", "StratificationResult", "Subspace", "codetect_dimension", "default_schedule",
    "orthonormalize", "practical_schedule", "prune_pass", "run", "sample_mixture", "sample_preset",
    "subspace_angle",
]
