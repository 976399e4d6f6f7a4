"""Embedding quality measures between a data space and its latent codes.

All measures take the two pairwise distance matrices. Neighbour ranks break
distance ties by vertex index, the same convention the persistence code uses.

References
----------
.. [1] J. Venna, S. Kaski, Local multidimensional scaling, Neural Networks 19 (2006).
.. [2] J. A. Lee, M. Verleysen, Quality assessment of dimensionality reduction:
   rank-based criteria, Neurocomputing 72 (2009).
.. [3] F. Chazal, D. Cohen-Steiner, Q. Merigot, Geometric inference for
   probability measures, Found. Comput. Math. 11 (2011).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from topoae.exceptions import DegenerateInputError, ValidationError
from topoae.persistence import DistanceMatrix, pairwise_distances

DEFAULT_SIGMAS = (0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_K = 15

__all__ = [
    "MetricsReport",
    "density_estimate",
    "kl_sigma",
    "trustworthiness",
    "continuity",
    "mrre",
    "l_rmse",
    "neighbour_ranks",
    "evaluate_embedding",
    "DEFAULT_SIGMAS",
    "DEFAULT_K",
]


def _values(dist) -> np.ndarray:
    if isinstance(dist, DistanceMatrix):
        return dist.values
    return np.asarray(dist, dtype=np.float64)


def _pair(dist_x, dist_z):
    ax, az = _values(dist_x), _values(dist_z)
    if ax.shape != az.shape or ax.ndim != 2 or ax.shape[0] != ax.shape[1]:
        raise ValidationError(f"distance matrices must be equal-sized squares, got {ax.shape} and {az.shape}")
    return ax, az


def density_estimate(dist, sigma: float) -> np.ndarray:
    """Gaussian-kernel density at each point, as a probability vector.

    Distances are first divided by their maximum, then
    ``f_i = sum_j exp(-d_ij**2 / sigma)`` is normalised to sum to one.
    """
    a = _values(dist)
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    if a.shape[0] < 2:
        raise ValidationError("density estimate needs at least two points")
    top = a.max()
    if top == 0:
        raise DegenerateInputError("all points coincide; distances cannot be normalised")
    f = np.exp(-((a / top) ** 2) / sigma).sum(axis=1)
    return f / f.sum()


def kl_sigma(dist_x, dist_z, sigma: float) -> float:
    """KL divergence of the latent density estimate from the data one."""
    ax, az = _pair(dist_x, dist_z)
    p = density_estimate(ax, sigma)
    q = density_estimate(az, sigma)
    if np.any((q == 0) & (p > 0)):
        raise DegenerateInputError("latent density vanishes where the data density does not")
    return float(np.sum(p * (np.log(p) - np.log(q))))


def neighbour_ranks(dist) -> np.ndarray:
    """``ranks[i, j]`` = 1-based rank of j among i's neighbours; the diagonal is 0."""
    a = _values(dist)
    m = a.shape[0]
    keyed = a.copy()
    np.fill_diagonal(keyed, -np.inf)
    idx = np.broadcast_to(np.arange(m), (m, m))
    order = np.lexsort((idx, keyed), axis=1)
    ranks = np.empty((m, m), dtype=np.int64)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(m), (m, m)), axis=1)
    return ranks


def _check_k(k, m):
    if not 1 <= k < m:
        raise ValidationError(f"k must satisfy 1 <= k < {m}, got {k}")


def _intrusion_score(ranks_base, ranks_other, k):
    """1 minus the normalised rank penalty of points that are among the k
    nearest in ``other`` but not in ``base``."""
    m = ranks_base.shape[0]
    intruders = (ranks_other <= k) & (ranks_other > 0) & (ranks_base > k)
    penalty = np.sum(ranks_base[intruders] - k)
    if k < m / 2:
        norm = m * k * (2 * m - 3 * k - 1)
    else:
        norm = m * (m - k) * (m - k - 1)
    if norm == 0:
        return 1.0
    return float(1.0 - 2.0 * penalty / norm)


def trustworthiness(dist_x, dist_z, k: int = DEFAULT_K) -> float:
    ax, az = _pair(dist_x, dist_z)
    _check_k(k, ax.shape[0])
    return _intrusion_score(neighbour_ranks(ax), neighbour_ranks(az), k)


def continuity(dist_x, dist_z, k: int = DEFAULT_K) -> float:
    return trustworthiness(dist_z, dist_x, k)


def mrre(dist_x, dist_z, k: int = DEFAULT_K) -> float:
    """Mean of the two directed relative rank errors; 0 for a perfect embedding."""
    ax, az = _pair(dist_x, dist_z)
    m = ax.shape[0]
    _check_k(k, m)
    rx, rz = neighbour_ranks(ax), neighbour_ranks(az)
    i = np.arange(1, k + 1)
    norm = m * np.sum(np.abs(m - 2 * i + 1) / i)
    near_z = (rz > 0) & (rz <= k)
    near_x = (rx > 0) & (rx <= k)
    zx = np.sum(np.abs(rx[near_z] - rz[near_z]) / rz[near_z])
    xz = np.sum(np.abs(rx[near_x] - rz[near_x]) / rx[near_x])
    return float(0.5 * (zx + xz) / norm)


def l_rmse(dist_x, dist_z) -> float:
    ax, az = _pair(dist_x, dist_z)
    return float(np.sqrt(np.mean((ax - az) ** 2)))


@dataclass
class MetricsReport:
    kl: dict
    trust: float
    cont: float
    mrre: float
    l_rmse: float
    k_neighbors: int
    sigma_grid: list
    data_mse: Optional[float] = None
    n_points: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kl"] = {repr(float(s)): v for s, v in self.kl.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        d = dict(d)
        d["kl"] = {float(s): v for s, v in d["kl"].items()}
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "MetricsReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def flat(self) -> dict:
        """One-level mapping suitable for a table row."""
        row = {f"kl_{s:g}": v for s, v in self.kl.items()}
        row.update(
            {"l_mrre": self.mrre, "l_cont": self.cont, "l_trust": self.trust, "l_rmse": self.l_rmse,
             "data_mse": self.data_mse}
        )
        return row


def evaluate_embedding(
    data,
    latent,
    reconstruction=None,
    sigmas=DEFAULT_SIGMAS,
    k: int = DEFAULT_K,
) -> MetricsReport:
    """All quality measures for one embedding (plus Data MSE when a reconstruction is given)."""
    x = np.asarray(getattr(data, "data", data), dtype=np.float64)
    z = np.asarray(getattr(latent, "data", latent), dtype=np.float64)
    if x.shape[0] != z.shape[0]:
        raise ValidationError(f"data has {x.shape[0]} rows, latent {z.shape[0]}")
    ax, az = pairwise_distances(x).values, pairwise_distances(z).values
    data_mse = None
    if reconstruction is not None:
        r = np.asarray(reconstruction, dtype=np.float64)
        data_mse = float(np.mean((r - x) ** 2))
    return MetricsReport(
        kl={float(s): kl_sigma(ax, az, s) for s in sigmas},
        trust=trustworthiness(ax, az, k),
        cont=continuity(ax, az, k),
        mrre=mrre(ax, az, k),
        l_rmse=l_rmse(ax, az),
        k_neighbors=k,
        sigma_grid=[float(s) for s in sigmas],
        data_mse=data_mse,
        n_points=int(x.shape[0]),
    )
