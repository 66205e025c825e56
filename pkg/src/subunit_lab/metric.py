"""Subunit distance fields via a monotone anisotropic eikonal solver.

For a diagonal form Q = diag(q11, q22) the subunit constraint
(gamma' . xi)^2 <= xi' Q xi for all xi is exactly the ellipse constraint
(g1')^2/q11 + (g2')^2/q22 <= 1, so the regularized subunit distance
d_eps(x0, .) solves the eikonal equation

    (q11 + eps^2) (d_x)^2 + (q22 + eps^2) (d_y)^2 = 1.

We discretize with the Godunov upwind scheme and march causally
(fast marching, single pass).  d_eps increases monotonically as eps
decreases; the eps -> 0 limit is estimated by Richardson extrapolation
over a geometric eps ladder.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, MonotonicityError
from .grid import GridSpec

DEFAULT_EPS_LADDER = tuple(0.1 * 2.0 ** (-k) for k in range(6))


@dataclass(frozen=True)
class DistanceField:
    """Distance values from one source node at one regularization level.

    epsilon == 0 marks an extrapolated limit field; frozen_mask is False on
    nodes judged unreachable in the limit (value beyond diam(Omega)/eps_min).
    error_bar is set only on extrapolated fields (last ladder increment).
    """

    grid: GridSpec
    source: tuple
    epsilon: float
    values: np.ndarray
    frozen_mask: np.ndarray
    error_bar: np.ndarray | None = None

    def __post_init__(self):
        self.values.setflags(write=False)
        self.frozen_mask.setflags(write=False)

    def slack(self):
        """Discretization slack declared for this grid (first-order scheme)."""
        return 2.0 * max(self.grid.hx, self.grid.hy)


def solve_distance(form, source, epsilon):
    """Fast-marching solve of the regularized subunit eikonal equation.

    source: (i, j) node.  epsilon must be positive; the eps = 0 limit is
    the job of extrapolate_distance.  Ties in the causal ordering break by
    linear node index, so results are bit-deterministic.
    """
    if epsilon <= 0.0:
        raise ConfigError("epsilon must be positive; use extrapolate_distance "
                          "for the limit field", "metric.epsilon")
    grid = form.grid
    if not grid.contains_node(source):
        raise DomainError(f"source node {source} outside grid")
    nx, ny = grid.shape
    hx, hy = grid.hx, grid.hy
    e2 = epsilon * epsilon
    alpha = (form.q11 + e2).ravel()   # x-direction coefficient
    beta = (form.q22 + e2).ravel()    # y-direction coefficient

    n = nx * ny
    values = np.full(n, np.inf)
    state = np.zeros(n, dtype=np.int8)  # 0 far, 1 narrow, 2 frozen
    src = source[0] * ny + source[1]
    values[src] = 0.0
    heap = [(0.0, src)]
    sqrt = math.sqrt
    inf = math.inf

    while heap:
        v, idx = heapq.heappop(heap)
        if state[idx] == 2:
            continue
        state[idx] = 2
        i, j = divmod(idx, ny)
        for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            ii, jj = i + di, j + dj
            if not (0 <= ii < nx and 0 <= jj < ny):
                continue
            nb = ii * ny + jj
            if state[nb] == 2:
                continue
            # frozen one-sided neighbor minima in each axis
            a = inf
            if ii > 0 and state[nb - ny] == 2:
                a = values[nb - ny]
            if ii < nx - 1 and state[nb + ny] == 2:
                a = min(a, values[nb + ny])
            b = inf
            if jj > 0 and state[nb - 1] == 2:
                b = values[nb - 1]
            if jj < ny - 1 and state[nb + 1] == 2:
                b = min(b, values[nb + 1])
            A = alpha[nb] / (hx * hx)
            B = beta[nb] / (hy * hy)
            u = inf
            if a < inf and b < inf:
                S = A + B
                P = A * a + B * b
                disc = P * P - S * (A * a * a + B * b * b - 1.0)
                if disc >= 0.0:
                    cand = (P + sqrt(disc)) / S
                    if cand >= a and cand >= b:
                        u = cand
            if u == inf:
                # one-sided fallback (causality not met or single neighbor)
                if a < inf:
                    u = a + hx / sqrt(alpha[nb])
                if b < inf:
                    u = min(u, b + hy / sqrt(beta[nb]))
            if u < values[nb]:
                values[nb] = u
                state[nb] = 1
                heapq.heappush(heap, (u, nb))

    vals = values.reshape(nx, ny)
    return DistanceField(grid=grid, source=tuple(source), epsilon=float(epsilon),
                         values=vals, frozen_mask=np.isfinite(vals))


def solve_ladder(form, source, epsilons=DEFAULT_EPS_LADDER, threads=1):
    """Distance fields over a decreasing eps ladder (independent solves)."""
    eps = sorted(set(float(e) for e in epsilons), reverse=True)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda e: solve_distance(form, source, e), eps))
    return [solve_distance(form, source, e) for e in eps]


def extrapolate_distance(fields, monotonicity_tol=1e-9):
    """Richardson-style eps -> 0 limit of a monotone field ladder.

    Needs >= 3 fields at strictly decreasing eps with identical source and
    grid.  Values must be nodewise nondecreasing as eps decreases (exact for
    the monotone scheme); violations beyond tolerance raise MonotonicityError.
    The per-node error bar is the last increment; nodes whose limit exceeds
    diam(Omega)/eps_min are flagged unreachable.
    """
    if len(fields) < 3:
        raise ConfigError("need at least 3 ladder fields", "metric.ladder")
    eps = [f.epsilon for f in fields]
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ConfigError("epsilons must be strictly decreasing", "metric.ladder")
    g = fields[0].grid
    src = fields[0].source
    if any(f.grid != g or f.source != src for f in fields[1:]):
        raise ConfigError("ladder fields must share source and grid",
                          "metric.ladder")
    for f1, f2 in zip(fields, fields[1:]):
        drop = f1.values - f2.values
        bad = drop > monotonicity_tol * (1.0 + np.abs(f1.values))
        if np.any(bad):
            i, j = np.unravel_index(np.argmax(drop), f1.values.shape)
            raise MonotonicityError(
                f"distance decreased by {drop[i, j]:.3e} at node ({i}, {j}) "
                f"between eps={f1.epsilon} and eps={f2.epsilon}")

    v_prev, v_last = fields[-2].values, fields[-1].values
    d_last = v_last - v_prev
    if len(fields) >= 3:
        d_prev = v_prev - fields[-3].values
    else:
        d_prev = np.full_like(d_last, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(d_prev > 1e-300, d_last / np.maximum(d_prev, 1e-300), 0.0)
    rho = np.clip(rho, 0.0, 0.95)
    limit = v_last + d_last * rho / (1.0 - rho)
    bound = g.diameter / eps[-1]
    reachable = limit <= bound
    limit = np.where(reachable, limit, np.inf)
    return DistanceField(grid=g, source=src, epsilon=0.0, values=limit,
                         frozen_mask=reachable, error_bar=d_last)


def ball(field, r):
    """Open metric ball as a boolean node mask: {values < r}."""
    if r <= 0.0:
        raise DomainError("ball radius must be positive")
    return field.values < r


def ball_count(field, r):
    return int(np.count_nonzero(field.values < r))


def sorted_values(field):
    """Finite distance values sorted ascending (volume-curve backbone)."""
    v = field.values[np.isfinite(field.values)]
    return np.sort(v.ravel())


_STENCILS = {
    8: [(1, 0), (0, 1), (-1, 0), (0, -1),
        (1, 1), (1, -1), (-1, 1), (-1, -1)],
    16: [(2, 1), (2, -1), (-2, 1), (-2, -1),
         (1, 2), (1, -2), (-1, 2), (-1, -2)],
    32: [(3, 1), (3, -1), (-3, 1), (-3, -1),
         (1, 3), (1, -3), (-1, 3), (-1, -3),
         (3, 2), (3, -2), (-3, 2), (-3, -2),
         (2, 3), (2, -3), (-2, 3), (-2, -3)],
}


def dijkstra_distance(form, source, epsilon, neighborhood=32):
    """Brute-force anisotropic shortest path on the grid graph (oracle).

    Edge cost between nodes p, q is the Riemannian length of the straight
    segment in the metric dx^2/(q11+eps^2) + dy^2/(q22+eps^2), integrated
    with a 3-point rule along the segment.  A wide neighborhood (up to 32)
    keeps the metrication (angular) error near 1%.  Slow; intended for
    cross-checks on modest grids.
    """
    grid = form.grid
    nx, ny = grid.shape
    hx, hy = grid.hx, grid.hy
    e2 = epsilon * epsilon
    a = form.q11 + e2
    b = form.q22 + e2
    if neighborhood not in (8, 16, 32):
        raise ConfigError("neighborhood must be 8, 16 or 32", "metric.oracle")
    stencil = []
    for size in (8, 16, 32):
        stencil += _STENCILS[size]
        if size == neighborhood:
            break

    n = nx * ny
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    src = source[0] * ny + source[1]
    dist[src] = 0.0
    heap = [(0.0, src)]
    fractions = (1.0 / 6.0, 0.5, 5.0 / 6.0)
    while heap:
        v, idx = heapq.heappop(heap)
        if done[idx]:
            continue
        done[idx] = True
        i, j = divmod(idx, ny)
        for di, dj in stencil:
            ii, jj = i + di, j + dj
            if not (0 <= ii < nx and 0 <= jj < ny):
                continue
            nb = ii * ny + jj
            if done[nb]:
                continue
            dx, dy = di * hx, dj * hy
            # 3-point sampling of the coefficients along the segment
            w = 0.0
            for s in fractions:
                si = int(round(i + s * di))
                sj = int(round(j + s * dj))
                w += math.sqrt(dx * dx / a[si, sj] + dy * dy / b[si, sj])
            w /= len(fractions)
            cand = v + w
            if cand < dist[nb]:
                dist[nb] = cand
                heapq.heappush(heap, (cand, nb))
    return DistanceField(grid=grid, source=tuple(source), epsilon=float(epsilon),
                         values=dist.reshape(nx, ny),
                         frozen_mask=np.isfinite(dist.reshape(nx, ny)))
