"""Simulation and numerical verification for the catalytic branching random
walk on Z^d."""
from .lattice import BoxIndex, SparseMeasure, neighbors, norm_l1, norm_linf, origin, total_variation
from .params import ModelParams

__version__ = "0.1.0"

__all__ = [
    "BoxIndex",
    "ModelParams",
    "SparseMeasure",
    "neighbors",
    "norm_l1",
    "norm_linf",
    "origin",
    "total_variation",
]
