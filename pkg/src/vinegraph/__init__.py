"""Plant graphs and pruning points from grapevine instance-segmentation masks."""
from .graph_builder import ConnectionParams, build_graph
from .pipeline import PipelineResult, run_pipeline
from .plant import GrapevineItem, OrganClass, PlantGraph

__version__ = "0.1.0"

__all__ = [
    "ConnectionParams",
    "GrapevineItem",
    "OrganClass",
    "PipelineResult",
    "PlantGraph",
    "build_graph",
    "run_pipeline",
]
