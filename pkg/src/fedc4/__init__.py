"""Desk-scale federated graph learning with local graph condensation and
selective client-to-client node exchange."""

from .kernels import BACKEND
from .graph import Graph, load_dataset, sbm_generate
from .condense import CondenseConfig, CondensedGraph
from .federation import FederationConfig, run, run_baseline, run_fedc4

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Graph", "load_dataset", "sbm_generate", "CondenseConfig", "CondensedGraph",
    "FederationConfig", "run", "run_baseline", "run_fedc4",
]
