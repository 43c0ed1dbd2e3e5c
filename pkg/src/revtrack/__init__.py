"""Transaction-graph forensics toolkit.

Classifies subgraphs of a directed transaction graph from their boundary
(sender and receiver sets) and discovers new suspicious sender-receiver
links by iterative bisection filtering, with a synthetic generator for
desk-scale experiments.
"""

__version__ = "0.1.0"

from .graph_core import BackgroundGraph, BoundarySets, Subgraph  # noqa: F401
from .synth_gen import SynthConfig, SynthDataset  # noqa: F401
