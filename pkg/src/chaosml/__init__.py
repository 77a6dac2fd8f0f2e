"""Machine learning with chaotic strange-attractor feature transforms."""

__version__ = "0.1.0"

from .attractors import AttractorKind, AttractorSpec, IntegrationConfig, derivative, integrate, rk4_step
from .transform import FeatureMatrix, TrajectoryTensor, dual_transform, encode_initial, slice_iteration, transform

__all__ = [
    "AttractorKind",
    "AttractorSpec",
    "IntegrationConfig",
    "derivative",
    "integrate",
    "rk4_step",
    "FeatureMatrix",
    "TrajectoryTensor",
    "dual_transform",
    "encode_initial",
    "slice_iteration",
    "transform",
]
