"""Plane-label stereo matching with local expansion moves."""

from .core import (LabelField, MatchParams, NormalDisparity, PlaneLabel, Rect, SmoothParams, StereoPair,
                   disparity_at, from_plane, plane_from_world, random_plane, to_plane)
from .energy import EnergyModel, region_data_costs, total_energy
from .localexp import OptimizerConfig, optimize
from .postproc import postprocess

__all__ = [
    "EnergyModel", "LabelField", "MatchParams", "NormalDisparity", "OptimizerConfig", "PlaneLabel", "Rect",
    "SmoothParams", "StereoPair", "disparity_at", "from_plane", "optimize", "plane_from_world", "postprocess",
    "random_plane", "region_data_costs", "to_plane", "total_energy",
]
