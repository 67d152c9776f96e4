"""Low-space MPC simulation of layer decompositions, 3-coloring, MIS and
maximal matching on forests."""

from .colorize import Coloring, mpc_color_bounded, mpc_color_general
from .decompose import (Decomposition, mpc_decompose_bounded, mpc_decompose_general,
                        sequential_decompose, validate_decomposition)
from .derive import matching_from_coloring, mis_from_coloring
from .forest import Forest, TreeGenSpec, generate, load_forest
from .runtime import MpcConfig, RoundLog

__all__ = [
    "Coloring", "Decomposition", "Forest", "MpcConfig", "RoundLog", "TreeGenSpec", "generate",
    "load_forest", "matching_from_coloring", "mis_from_coloring", "mpc_color_bounded",
    "mpc_color_general", "mpc_decompose_bounded", "mpc_decompose_general", "sequential_decompose",
    "validate_decomposition",
]
