"""Subsampling stability: Hausdorff distances, diagram distances and bounds.

A subsample X_m of a point cloud X has 0-dimensional diagram within bottleneck
distance ``2 * d_H(X, X_m)`` of the full one. The helpers here measure both
sides of that inequality, the decay of d_H as the subsample grows, and an
integral upper bound on its expectation computed from the empirical
distribution of pairwise distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from topoae.exceptions import InvariantViolation, ValidationError
from topoae.persistence import DistanceMatrix, PersistenceResult, PointCloud, pairwise_distances, vr_persistence0

__all__ = [
    "SubsampleTrial",
    "EmpiricalDistanceDistribution",
    "hausdorff_subsample",
    "bottleneck_distance",
    "wasserstein_distance",
    "subsample_bottleneck_trials",
    "expected_hausdorff_bound",
    "hausdorff_convergence",
    "latent_topo_distances",
    "trial_rng",
]


@dataclass(frozen=True)
class SubsampleTrial:
    n: int
    m: int
    trial: int
    hausdorff: float
    bottleneck: float
    seed: int

    def violates(self, tol: float = 1e-9) -> bool:
        return self.bottleneck > 2.0 * self.hausdorff + tol


@dataclass(frozen=True)
class EmpiricalDistanceDistribution:
    """Sorted sample of pairwise distances, standing in for the distance CDF."""

    sample: np.ndarray
    n: int

    def __post_init__(self):
        s = np.sort(np.asarray(self.sample, dtype=np.float64).reshape(-1))
        if s.size == 0:
            raise ValidationError("empty distance sample")
        if s[0] < 0:
            raise ValidationError("distances must be nonnegative")
        object.__setattr__(self, "sample", s)

    @classmethod
    def from_distances(cls, dist) -> "EmpiricalDistanceDistribution":
        a = dist.values if isinstance(dist, DistanceMatrix) else np.asarray(dist, dtype=np.float64)
        return cls(a[np.triu_indices(a.shape[0], k=1)], a.shape[0])

    @classmethod
    def from_cloud(cls, cloud) -> "EmpiricalDistanceDistribution":
        return cls.from_distances(pairwise_distances(cloud))

    def cdf(self, z) -> np.ndarray:
        return np.searchsorted(self.sample, z, side="right") / self.sample.size


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Per-trial generator; depends only on (seed, trial) so trials can run in any order."""
    return np.random.default_rng([seed, trial])


def _dist_values(cloud_or_dist) -> np.ndarray:
    if isinstance(cloud_or_dist, DistanceMatrix):
        return cloud_or_dist.values
    return pairwise_distances(cloud_or_dist).values


def hausdorff_subsample(cloud, subsample_indices) -> float:
    """Hausdorff distance between a cloud and a subset of its points.

    Only the direction cloud -> subsample is nonzero, so this is
    ``max_x min_{x' in subsample} d(x, x')``. ``cloud`` may also be a
    precomputed :class:`DistanceMatrix`.
    """
    idx = np.unique(np.asarray(subsample_indices, dtype=np.int64))
    if idx.size == 0:
        raise ValidationError("subsample must be non-empty")
    a = _dist_values(cloud)
    if idx[0] < 0 or idx[-1] >= a.shape[0]:
        raise ValidationError("subsample index out of range")
    return float(a[:, idx].min(axis=1).max())


def _diagram(d) -> np.ndarray:
    if isinstance(d, PersistenceResult):
        d = d.diagram
    arr = np.asarray(d, dtype=np.float64).reshape(-1, 2)
    if np.any(arr[:, 1] < arr[:, 0]):
        raise ValidationError("diagram points must satisfy birth <= death")
    return arr


def _costs(a, b):
    cross = np.maximum(
        np.abs(a[:, None, 0] - b[None, :, 0]),
        np.abs(a[:, None, 1] - b[None, :, 1]),
    )
    return cross, (a[:, 1] - a[:, 0]) / 2.0, (b[:, 1] - b[:, 0]) / 2.0


def _perfect_matching_within(t, cross, diag_a, diag_b) -> bool:
    # Rows: points of a, then diagonal copies of b's points.
    # Columns: points of b, then diagonal copies of a's points.
    na, nb = cross.shape
    rows, cols = np.nonzero(cross <= t)
    ia = np.nonzero(diag_a <= t)[0]
    jb = np.nonzero(diag_b <= t)[0]
    dd_rows = np.repeat(np.arange(nb), na) + na
    dd_cols = np.tile(np.arange(na), nb) + nb
    r = np.concatenate([rows, ia, jb + na, dd_rows])
    c = np.concatenate([cols, ia + nb, jb, dd_cols])
    graph = csr_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(na + nb, na + nb))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(match >= 0))


def bottleneck_distance(diag_a, diag_b) -> float:
    """Exact bottleneck distance (L-infinity ground metric, diagonal matches allowed).

    Binary search over the finite set of candidate costs; each probe tests for
    a perfect matching with Hopcroft--Karp.
    """
    a, b = _diagram(diag_a), _diagram(diag_b)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    cross, diag_a_cost, diag_b_cost = _costs(a, b)
    # Matching everything to the diagonal is always feasible.
    upper = max(diag_a_cost.max(initial=0.0), diag_b_cost.max(initial=0.0))
    candidates = np.concatenate([cross.ravel(), diag_a_cost, diag_b_cost, [0.0]])
    candidates = np.unique(candidates[candidates <= upper])
    lo, hi = 0, candidates.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect_matching_within(candidates[mid], cross, diag_a_cost, diag_b_cost):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def wasserstein_distance(diag_a, diag_b, q: float = 1) -> float:
    """q-Wasserstein distance with L-infinity ground cost, via an exact assignment."""
    if q < 1:
        raise ValidationError("q must be at least 1")
    a, b = _diagram(diag_a), _diagram(diag_b)
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        return 0.0
    cross, diag_a_cost, diag_b_cost = _costs(a, b)
    big = (np.sum(cross**q) + np.sum(diag_a_cost**q) + np.sum(diag_b_cost**q) + 1.0) * 2.0
    cost = np.zeros((na + nb, na + nb))
    cost[:na, :nb] = cross**q
    cost[:na, nb:] = big
    cost[np.arange(na), nb + np.arange(na)] = diag_a_cost**q
    cost[na:, :nb] = big
    cost[na + np.arange(nb), np.arange(nb)] = diag_b_cost**q
    rows, cols = linear_sum_assignment(cost)
    return float(np.sum(cost[rows, cols]) ** (1.0 / q))


def _as_cloud(cloud) -> PointCloud:
    return cloud if isinstance(cloud, PointCloud) else PointCloud(cloud)


def subsample_bottleneck_trials(cloud, m: int, trials: int, seed: int = 0, tol: float = 1e-9, strict: bool = False) -> list:
    """Compare d_b of subsample diagrams with twice the Hausdorff distance.

    Subsamples are drawn without replacement. With ``strict=True`` any trial
    with ``d_b > 2 d_H + tol`` raises :class:`InvariantViolation`.
    """
    cloud = _as_cloud(cloud)
    n = len(cloud)
    if not 2 <= m <= n:
        raise ValidationError(f"need 2 <= m <= n = {n}, got m = {m}")
    a = pairwise_distances(cloud).values
    full = vr_persistence0(a).diagram
    out = []
    for t in range(trials):
        idx = np.sort(trial_rng(seed, t).choice(n, size=m, replace=False))
        d_h = hausdorff_subsample(DistanceMatrix(a), idx)
        sub = vr_persistence0(a[np.ix_(idx, idx)]).diagram
        trial = SubsampleTrial(n, m, t, d_h, bottleneck_distance(full, sub), seed)
        if strict and trial.violates(tol):
            raise InvariantViolation(
                f"trial {t}: bottleneck {trial.bottleneck} > 2 * hausdorff {trial.hausdorff}"
            )
        out.append(trial)
    return out


def expected_hausdorff_bound(emp: EmpiricalDistanceDistribution, n: int, m: int) -> tuple:
    """Evaluate ``integral_0^inf 1 - F(z)**k dz`` for k = n - 1 and k = m (n - m).

    ``F`` is the empirical step CDF of ``emp``; the integral is the exact sum
    over the gaps between consecutive order statistics. Returns
    ``(bound_n_minus_1, bound_m_n_minus_m)``.
    """
    if not 1 <= m < n:
        raise ValidationError(f"need 1 <= m < n, got m = {m}, n = {n}")
    s = emp.sample
    gaps = np.diff(np.concatenate([[0.0], s]))
    # F equals i / N on [s_i, s_{i+1}); on [0, s_1) it is 0.
    levels = np.arange(s.size) / s.size

    def integral(k):
        return float(np.sum(gaps * (1.0 - levels**k)))

    return integral(n - 1), integral(m * (n - m))


def hausdorff_convergence(cloud, m_values, trials: int, seed: int = 0) -> list:
    """Rows ``dict(n, m, trial, d_H, d_b, bound)`` for every m and trial.

    ``bound`` is the m(n - m) integral bound for that m (NaN when m = n).
    """
    cloud = _as_cloud(cloud)
    n = len(cloud)
    emp = EmpiricalDistanceDistribution.from_cloud(cloud)
    rows = []
    for m in m_values:
        bound = expected_hausdorff_bound(emp, n, m)[1] if m < n else float("nan")
        for tr in subsample_bottleneck_trials(cloud, m, trials, seed=seed + m):
            rows.append(
                {"n": n, "m": m, "trial": tr.trial, "d_H": tr.hausdorff, "d_b": tr.bottleneck, "bound": bound}
            )
    return rows


def latent_topo_distances(test_cloud, latent_cloud, subsample_size: int, trials: int = 10, seed: int = 0) -> dict:
    """Mean and standard deviation of W1, W2 and W_inf between diagrams of
    matching subsamples of a data set and its latent codes.

    Returns ``{"W1": (mean, std), "W2": (mean, std), "Winf": (mean, std)}``.
    """
    x = _as_cloud(test_cloud)
    z = _as_cloud(latent_cloud)
    n = len(x)
    if len(z) != n:
        raise ValidationError(f"clouds differ in size: {n} vs {len(z)}")
    if not 2 <= subsample_size <= n:
        raise ValidationError(f"subsample size must lie in [2, {n}], got {subsample_size}")
    values = {"W1": [], "W2": [], "Winf": []}
    for t in range(trials):
        idx = np.sort(trial_rng(seed, t).choice(n, size=subsample_size, replace=False))
        dx = vr_persistence0(pairwise_distances(x.data[idx])).diagram
        dz = vr_persistence0(pairwise_distances(z.data[idx])).diagram
        values["W1"].append(wasserstein_distance(dx, dz, 1))
        values["W2"].append(wasserstein_distance(dx, dz, 2))
        values["Winf"].append(bottleneck_distance(dx, dz))
    return {k: (float(np.mean(v)), float(np.std(v))) for k, v in values.items()}
