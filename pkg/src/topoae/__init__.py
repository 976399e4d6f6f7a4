"""Topology-preserving autoencoders built on 0-dimensional persistent homology."""

from topoae.exceptions import (
    ConfigError,
    DegenerateInputError,
    InvariantViolation,
    ParseError,
    ValidationError,
)
from topoae.persistence import (
    DistanceMatrix,
    PersistencePair,
    PersistenceResult,
    PointCloud,
    canonical_tie_break,
    pairwise_distances,
    select_distances,
    vr_persistence0,
)
from topoae.topo_loss import TopoLossResult, directed_loss, topo_loss, topo_loss_grad

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInputError",
    "DistanceMatrix",
    "InvariantViolation",
    "ParseError",
    "PersistencePair",
    "PersistenceResult",
    "PointCloud",
    "TopoLossResult",
    "ValidationError",
    "canonical_tie_break",
    "directed_loss",
    "pairwise_distances",
    "select_distances",
    "topo_loss",
    "topo_loss_grad",
    "vr_persistence0",
]
