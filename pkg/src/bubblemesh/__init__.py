"""Bubble placement meshing with P1/P2 superconvergence experiments."""
from .estimators import BubbleMesher, PoissonFEM
from .geometry import ConfigurationError, get_domain, preset_domain
from .harness import ExperimentConfig, run_experiment, run_lshape_study
from .sizing import SizeField
from .triangulate import TriMesh, delaunay, triangulate

__version__ = "0.1.0"

__all__ = [
    "BubbleMesher",
    "PoissonFEM",
    "ConfigurationError",
    "ExperimentConfig",
    "SizeField",
    "TriMesh",
    "delaunay",
    "get_domain",
    "preset_domain",
    "run_experiment",
    "run_lshape_study",
    "triangulate",
]
