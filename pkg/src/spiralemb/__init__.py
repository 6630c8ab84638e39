"""Explicit area-preserving spiral embeddings and numerical certification of their bounds."""
from .maps_core import (
    BallRegion,
    DomainError,
    ParameterError,
    PlanarMap,
    RectRegion,
    SpiralembError,
    UsageError,
    compose,
)
from .spiral import SpiralParams, radius_bound, spiral_eval, spiral_map
from .torus_strip import CutoffProfile, DomainModel, FlowMap, build_cutoff, flow_time1
from .double_spiral import DoubleSpiralConfig, double_spiral_eval
from .chain import ChainConfig, compute_constants, plan_family, plan_kh, verify_main_bound
from .verifier import SampleGrid, VerificationReport

__version__ = "0.1.0"

__all__ = [
    "BallRegion", "DomainError", "ParameterError", "PlanarMap", "RectRegion", "SpiralembError",
    "UsageError", "compose", "SpiralParams", "radius_bound", "spiral_eval", "spiral_map",
    "CutoffProfile", "DomainModel", "FlowMap", "build_cutoff", "flow_time1",
    "DoubleSpiralConfig", "double_spiral_eval", "ChainConfig", "compute_constants",
    "plan_family", "plan_kh", "verify_main_bound", "SampleGrid", "VerificationReport",
    "__version__",
]
