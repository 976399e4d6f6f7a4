"""Independent reference implementations used to check the package.

Everything here is deliberately naive: loops, enumeration, or textbook
algorithms that share no code path with ``topoae``.
"""

import itertools
import math

import numpy as np


def double_loop_distances(points):
    points = np.asarray(points, dtype=float)
    m = len(points)
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            s = 0.0
            for a, b in zip(points[i], points[j]):
                s += (a - b) ** 2
            out[i, j] = math.sqrt(s)
    return out


def single_linkage_heights(dist):
    """Merge heights of naive agglomerative single-linkage clustering."""
    d = np.array(dist, dtype=float)
    m = d.shape[0]
    np.fill_diagonal(d, np.inf)
    alive = np.ones(m, dtype=bool)
    heights = []
    for _ in range(m - 1):
        masked = np.where(alive[:, None] & alive[None, :], d, np.inf)
        a, b = np.unravel_index(np.argmin(masked), masked.shape)
        heights.append(masked[a, b])
        # Single linkage: distance to the merged cluster is the minimum.
        d[a, :] = np.minimum(d[a, :], d[b, :])
        d[:, a] = d[a, :]
        d[a, a] = np.inf
        alive[b] = False
    return sorted(heights)


def prim_mst_weight(dist):
    d = np.asarray(dist, dtype=float)
    m = d.shape[0]
    in_tree = [False] * m
    best = [math.inf] * m
    best[0] = 0.0
    total = 0.0
    for _ in range(m):
        u = min((k for k in range(m) if not in_tree[k]), key=lambda k: best[k])
        in_tree[u] = True
        total += best[u]
        for v in range(m):
            if not in_tree[v] and d[u, v] < best[v]:
                best[v] = d[u, v]
    return total


def is_spanning_tree(edges, m):
    if len(edges) != m - 1:
        return False
    parent = list(range(m))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return len({find(k) for k in range(m)}) == 1


def central_difference(fn, x, step=1e-6):
    """Numerical gradient of scalar ``fn`` at array ``x`` (copied, not mutated)."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        plus = fn(x)
        flat[k] = orig - step
        minus = fn(x)
        flat[k] = orig
        g[k] = (plus - minus) / (2 * step)
    return grad


def gradients_close(analytic, numeric, rtol=1e-4, atol=1e-8):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return bool(np.all((err <= atol) | (err <= rtol * scale)))


def _linf(p, q):
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]))


def _diag_cost(p):
    return (p[1] - p[0]) / 2.0


def brute_bottleneck(a, b):
    """Exhaustive search over partial matchings of ``a`` into ``b``; rest go to the diagonal."""
    a = [tuple(p) for p in a]
    b = [tuple(p) for p in b]
    best = [math.inf]

    def rec(k, used, cur):
        if cur >= best[0]:
            return
        if k == len(a):
            rest = max((_diag_cost(b[j]) for j in range(len(b)) if j not in used), default=0.0)
            best[0] = min(best[0], max(cur, rest))
            return
        rec(k + 1, used, max(cur, _diag_cost(a[k])))
        for j in range(len(b)):
            if j not in used:
                rec(k + 1, used | {j}, max(cur, _linf(a[k], b[j])))

    rec(0, frozenset(), 0.0)
    return best[0]


def brute_wasserstein(a, b, q):
    a = [tuple(p) for p in a]
    b = [tuple(p) for p in b]
    best = math.inf
    for k in range(min(len(a), len(b)) + 1):
        for sa in itertools.combinations(range(len(a)), k):
            for sb in itertools.permutations(range(len(b)), k):
                cost = sum(_linf(a[i], b[j]) ** q for i, j in zip(sa, sb))
                cost += sum(_diag_cost(a[i]) ** q for i in range(len(a)) if i not in sa)
                cost += sum(_diag_cost(b[j]) ** q for j in range(len(b)) if j not in sb)
                best = min(best, cost)
    return best ** (1.0 / q)


def neighbour_ranks(dist):
    """rank[i][j]: 1-based position of j when sorting i's neighbours by (distance, index)."""
    m = len(dist)
    ranks = [[0] * m for _ in range(m)]
    for i in range(m):
        others = sorted((j for j in range(m) if j != i), key=lambda j: (dist[i][j], j))
        for r, j in enumerate(others, start=1):
            ranks[i][j] = r
    return ranks


def trustworthiness_ref(dx, dz, k):
    m = len(dx)
    rx, rz = neighbour_ranks(dx), neighbour_ranks(dz)
    penalty = 0
    for i in range(m):
        for j in range(m):
            if j != i and rz[i][j] <= k and rx[i][j] > k:
                penalty += rx[i][j] - k
    if penalty == 0:
        # Includes k = m - 1, where every point is a neighbour in both spaces.
        return 1.0
    if k < m / 2:
        norm = m * k * (2 * m - 3 * k - 1)
    else:
        norm = m * (m - k) * (m - k - 1)
    return 1.0 - 2.0 * penalty / norm


def mrre_ref(dx, dz, k):
    m = len(dx)
    rx, rz = neighbour_ranks(dx), neighbour_ranks(dz)
    c = m * sum(abs(m - 2 * i + 1) / i for i in range(1, k + 1))
    zx = sum(abs(rx[i][j] - rz[i][j]) / rz[i][j] for i in range(m) for j in range(m) if j != i and rz[i][j] <= k)
    xz = sum(abs(rx[i][j] - rz[i][j]) / rx[i][j] for i in range(m) for j in range(m) if j != i and rx[i][j] <= k)
    return 0.5 * (zx / c + xz / c)


def density_ref(dist, sigma):
    m = len(dist)
    top = max(max(row) for row in dist)
    f = []
    for i in range(m):
        f.append(sum(math.exp(-((dist[i][j] / top) ** 2) / sigma) for j in range(m)))
    s = sum(f)
    return [v / s for v in f]


def kl_ref(dx, dz, sigma):
    p, q = density_ref(dx, sigma), density_ref(dz, sigma)
    return sum(pi * math.log(pi / qi) for pi, qi in zip(p, q))


def rmse_ref(dx, dz):
    m = len(dx)
    s = 0.0
    for i in range(m):
        for j in range(m):
            s += (dx[i][j] - dz[i][j]) ** 2
    return math.sqrt(s / (m * m))


def hausdorff_ref(a, b):
    def one_sided(p, q):
        return max(min(math.dist(x, y) for y in q) for x in p)

    return max(one_sided(a, b), one_sided(b, a))
