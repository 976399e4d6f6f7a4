"""0-dimensional Vietoris--Rips persistence of finite metric spaces.

For dimension zero the persistence pairing of a Vietoris--Rips filtration is
the edge set of a minimum spanning tree: every vertex is born at scale 0 and
each tree edge kills one connected component at its length. The tree is built
with Kruskal's algorithm over all m(m-1)/2 edges and a union-find forest.

Ties between equal edge weights are broken lexicographically on the vertex
indices, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.spatial.distance import pdist, squareform

from topoae.exceptions import ValidationError

__all__ = [
    "PointCloud",
    "DistanceMatrix",
    "PersistencePair",
    "PersistenceResult",
    "pairwise_distances",
    "register_metric",
    "vr_persistence0",
    "select_distances",
    "canonical_tie_break",
]


@dataclass(frozen=True)
class PointCloud:
    """m points in d dimensions, optionally labelled (labels are never used numerically)."""

    data: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValidationError(f"point cloud must be a non-empty 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("point cloud contains non-finite coordinates")
        object.__setattr__(self, "data", data)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != data.shape[0]:
                raise ValidationError(
                    f"got {labels.shape[0]} labels for {data.shape[0]} points"
                )
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def subset(self, indices) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        labels = None if self.labels is None else self.labels[indices]
        return PointCloud(self.data[indices], labels)


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric, zero-diagonal, nonnegative matrix of pairwise distances."""

    values: np.ndarray
    metric: str = "euclidean"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1] or values.shape[0] < 1:
            raise ValidationError(f"distance matrix must be square and non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("distance matrix contains non-finite entries")
        if np.any(values < 0):
            raise ValidationError("distance matrix contains negative entries")
        if np.any(np.diag(values) != 0):
            raise ValidationError("distance matrix has a nonzero diagonal")
        scale = values.max() if values.size else 0.0
        if np.max(np.abs(values - values.T), initial=0.0) > 1e-12 * max(scale, 1.0):
            raise ValidationError("distance matrix is not symmetric")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.shape[0]

    @property
    def size(self) -> int:
        return self.values.shape[0]


class PersistencePair(NamedTuple):
    birth: float
    death: float


@dataclass(frozen=True)
class PersistenceResult:
    """Finite 0-dimensional diagram and its destroyer edges.

    ``diagram`` is a (k, 2) array of (birth, death) rows sorted by death;
    ``pairing`` is the matching (k, 2) integer array of edges (i, j), i < j.
    The single essential component is not part of the diagram.
    """

    diagram: np.ndarray
    pairing: np.ndarray
    essential_count: int = 1

    @property
    def deaths(self) -> np.ndarray:
        return self.diagram[:, 1]

    @property
    def pairs(self) -> list:
        return [PersistencePair(float(b), float(d)) for b, d in self.diagram]

    @property
    def edges(self) -> list:
        return [(int(i), int(j)) for i, j in self.pairing]

    def __len__(self):
        return self.diagram.shape[0]


def _euclidean(data: np.ndarray) -> np.ndarray:
    if data.shape[0] == 1:
        return np.zeros((1, 1))
    return squareform(pdist(data, metric="euclidean"))


_METRICS: dict = {"euclidean": _euclidean}


def register_metric(name: str, fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Make a custom distance available to :func:`pairwise_distances`.

    ``fn`` maps an (m, d) array to an (m, m) matrix. It need not satisfy the
    triangle inequality, but must be symmetric, nonnegative and zero on the diagonal.
    """
    _METRICS[name] = fn


def pairwise_distances(cloud, metric: str = "euclidean") -> DistanceMatrix:
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    try:
        fn = _METRICS[metric]
    except KeyError:
        raise ValidationError(f"unknown metric {metric!r}; known: {sorted(_METRICS)}") from None
    return DistanceMatrix(fn(cloud.data), metric)


def _as_matrix(dist) -> np.ndarray:
    if isinstance(dist, DistanceMatrix):
        return dist.values
    return DistanceMatrix(dist).values


def canonical_tie_break(i: int, j: int, weight: float) -> tuple:
    """Sort key giving a strict total order on edges: weight, then (i, j)."""
    if not i < j:
        raise ValidationError(f"edge indices must satisfy i < j, got ({i}, {j})")
    return (weight, i, j)


def _find(parent: list, x: int) -> int:
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


def vr_persistence0(dist) -> PersistenceResult:
    """0-dimensional persistence diagram and pairing of a distance matrix.

    Parameters
    ----------
    dist : DistanceMatrix or array_like
        Symmetric (m, m) matrix, m >= 1.

    Returns
    -------
    PersistenceResult
        m - 1 finite pairs (birth 0, death = edge length), sorted by death,
        with the minimum spanning tree edges that destroy them.
    """
    values = _as_matrix(dist)
    m = values.shape[0]
    if m == 1:
        return PersistenceResult(np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64), 1)

    rows, cols = np.triu_indices(m, k=1)
    weights = values[rows, cols]
    # Same ordering as canonical_tie_break, vectorised.
    order = np.lexsort((cols, rows, weights))

    parent = list(range(m))
    rank = [0] * m
    edges = []
    for i, j in zip(rows[order].tolist(), cols[order].tolist()):
        ri, rj = _find(parent, i), _find(parent, j)
        if ri == rj:
            continue
        if rank[ri] < rank[rj]:
            ri, rj = rj, ri
        parent[rj] = ri
        if rank[ri] == rank[rj]:
            rank[ri] += 1
        edges.append((i, j))
        if len(edges) == m - 1:
            break

    pairing = np.asarray(edges, dtype=np.int64)
    deaths = values[pairing[:, 0], pairing[:, 1]]
    diagram = np.column_stack([np.zeros(m - 1), deaths])
    return PersistenceResult(diagram, pairing, 1)


def select_distances(dist, pairing) -> np.ndarray:
    """Entries of ``dist`` at the given edges, in pairing order."""
    values = dist.values if isinstance(dist, DistanceMatrix) else np.asarray(dist, dtype=np.float64)
    pairing = np.asarray(pairing, dtype=np.int64).reshape(-1, 2)
    if pairing.size and (pairing.min() < 0 or pairing.max() >= values.shape[0]):
        raise ValidationError(
            f"pairing refers to vertices outside 0..{values.shape[0] - 1}"
        )
    return values[pairing[:, 0], pairing[:, 1]]
