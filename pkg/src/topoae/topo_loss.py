"""Two-directional topological loss between a batch and its latent codes.

Each direction keeps the persistence pairing of one space fixed and compares
the distances of those edges in both spaces::

    data_to_latent = 1/2 * || A_x[pi_x] - A_z[pi_x] ||^2
    latent_to_data = 1/2 * || A_z[pi_z] - A_x[pi_z] ||^2

Input-space distances do not depend on the encoder, so only A_z carries a
gradient. Pairings are treated as constants when differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from topoae.exceptions import ValidationError
from topoae.persistence import (
    DistanceMatrix,
    PointCloud,
    select_distances,
    vr_persistence0,
)

__all__ = ["TopoLossResult", "directed_loss", "topo_loss", "topo_loss_grad"]


@dataclass
class TopoLossResult:
    total: float
    data_to_latent: float
    latent_to_data: float
    grad_latent: np.ndarray
    # Paired edges whose latent length is exactly zero; they contribute no gradient.
    degenerate_edges: int = 0


def _values(dist) -> np.ndarray:
    if isinstance(dist, DistanceMatrix):
        return dist.values
    return np.asarray(dist, dtype=np.float64)


def directed_loss(source_dists, target_dists) -> float:
    source = np.asarray(source_dists, dtype=np.float64)
    target = np.asarray(target_dists, dtype=np.float64)
    if source.shape != target.shape:
        raise ValidationError(f"length mismatch: {source.shape} vs {target.shape}")
    diff = source - target
    return 0.5 * float(np.dot(diff, diff))


def _check_shapes(ax: np.ndarray, az: np.ndarray) -> None:
    if ax.ndim != 2 or ax.shape != az.shape or ax.shape[0] != ax.shape[1]:
        raise ValidationError(f"distance matrices must be equal-sized squares, got {ax.shape} and {az.shape}")


def topo_loss(dist_x, dist_z, pairing_x=None, pairing_z=None) -> tuple:
    """Return ``(total, data_to_latent, latent_to_data)``; unnormalised.

    Missing pairings are computed from the corresponding matrix.
    """
    ax, az = _values(dist_x), _values(dist_z)
    _check_shapes(ax, az)
    if pairing_x is None:
        pairing_x = vr_persistence0(ax).pairing
    if pairing_z is None:
        pairing_z = vr_persistence0(az).pairing
    x_to_z = directed_loss(select_distances(ax, pairing_x), select_distances(az, pairing_x))
    z_to_x = directed_loss(select_distances(az, pairing_z), select_distances(ax, pairing_z))
    return x_to_z + z_to_x, x_to_z, z_to_x


def topo_loss_grad(latent, dist_x, dist_z=None, pairing_x=None, pairing_z=None) -> TopoLossResult:
    """Topological loss and its gradient with respect to the latent coordinates.

    Parameters
    ----------
    latent : PointCloud or array_like
        (m, l) latent codes.
    dist_x : DistanceMatrix or array_like
        Input-space distances of the same batch.
    dist_z : DistanceMatrix or array_like, optional
        Euclidean distances of ``latent``; computed when omitted.
    pairing_x, pairing_z : array_like, optional
        Frozen persistence pairings; computed when omitted.

    Notes
    -----
    Both directed terms differentiate to the same per-edge expression. For an
    edge (i, j) with residual r = A_x[i, j] - A_z[i, j] the contribution to
    row i is ``-r * (z_i - z_j) / A_z[i, j]`` and the opposite vector goes to
    row j. Edges with ``A_z[i, j] == 0`` are skipped and counted in
    ``degenerate_edges``.
    """
    z = latent.data if isinstance(latent, PointCloud) else np.asarray(latent, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"latent codes must be 2-D, got shape {z.shape}")
    ax = _values(dist_x)
    if dist_z is None:
        diff = z[:, None, :] - z[None, :, :]
        az = np.sqrt(np.sum(diff * diff, axis=-1))
    else:
        az = _values(dist_z)
    _check_shapes(ax, az)
    if az.shape[0] != z.shape[0]:
        raise ValidationError(f"latent has {z.shape[0]} rows but distances are {az.shape[0]}x{az.shape[0]}")
    if pairing_x is None:
        pairing_x = vr_persistence0(ax).pairing
    if pairing_z is None:
        pairing_z = vr_persistence0(az).pairing

    total, x_to_z, z_to_x = topo_loss(ax, az, pairing_x, pairing_z)

    edges = np.concatenate(
        [np.asarray(pairing_x, dtype=np.int64).reshape(-1, 2),
         np.asarray(pairing_z, dtype=np.int64).reshape(-1, 2)]
    )
    grad = np.zeros_like(z)
    if edges.shape[0] == 0:
        return TopoLossResult(total, x_to_z, z_to_x, grad, 0)

    i, j = edges[:, 0], edges[:, 1]
    delta = z[i] - z[j]
    lengths = az[i, j]
    if not np.allclose(np.sqrt(np.sum(delta * delta, axis=1)), lengths, rtol=0.0, atol=1e-9):
        raise ValidationError("dist_z does not match the Euclidean distances of the latent codes")
    residual = ax[i, j] - lengths
    ok = lengths > 0
    coeff = np.zeros_like(lengths)
    coeff[ok] = -residual[ok] / lengths[ok]
    contrib = coeff[:, None] * delta
    np.add.at(grad, i, contrib)
    np.add.at(grad, j, -contrib)
    return TopoLossResult(total, x_to_z, z_to_x, grad, int(np.count_nonzero(~ok)))
