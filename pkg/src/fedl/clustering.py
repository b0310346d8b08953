"""Size-constrained K-means over station coordinates.

The assignment step is not a greedy nearest-centroid pass: for fixed
centroids it solves

    minimize    sum_i sum_k  tau[i,k] * ||point_i - centroid_k||^2
    subject to  each point in exactly one cluster,
                theta_low[k] <= |cluster k| <= theta_high[k],
                tau binary,

exactly, as a transportation problem via successive-shortest-paths
min-cost flow (network-flow integrality makes the LP optimum integral).
Centroid updates take the in-window mean and otherwise keep the previous
coordinates; iteration stops on an exact centroid fixpoint.

Exactness: every float is a dyadic rational, so the squared distances are
rescaled to integers losslessly and the flow runs in exact integer
arithmetic — no epsilon comparisons, no numerically-negative cycles.
Shortest paths use Bellman-Ford with strict-improvement relaxation over a
fixed edge order, so equal-cost assignments resolve toward the lower
cluster index and identical inputs give identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateDataError, InfeasibilityError


@dataclass(frozen=True)
class ClusterConfig:
    """K plus per-cluster size windows.

    ``theta_low``/``theta_high`` accept a single int (applied to every
    cluster), a sequence of K ints, or None for the balanced default
    floor(I/K) / ceil(I/K) resolved against the instance size.
    """

    k: int
    theta_low: int | Sequence[int] | None = None
    theta_high: int | Sequence[int] | None = None
    max_iterations: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InfeasibilityError(f"cluster count must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def windows(self, n_points: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """Resolve the size windows for an instance of ``n_points``."""

        def expand(value, default: int) -> tuple[int, ...]:
            if value is None:
                return (default,) * self.k
            if isinstance(value, int):
                return (value,) * self.k
            out = tuple(int(v) for v in value)
            if len(out) != self.k:
                raise InfeasibilityError(
                    f"need {self.k} window entries, got {len(out)}"
                )
            return out

        lows = expand(self.theta_low, n_points // self.k)
        highs = expand(self.theta_high, -(-n_points // self.k))
        for k, (lo, hi) in enumerate(zip(lows, highs)):
            if lo < 0 or lo > hi:
                raise InfeasibilityError(
                    f"cluster {k}: invalid window [{lo}, {hi}]"
                )
        if sum(lows) > n_points or sum(highs) < n_points:
            raise InfeasibilityError(
                f"windows admit no assignment of {n_points} points: "
                f"sum(theta_low)={sum(lows)}, sum(theta_high)={sum(highs)}"
            )
        return lows, highs


@dataclass(frozen=True)
class ClusterAssignment:
    tau: np.ndarray  # (I, K) binary membership
    centroids: np.ndarray  # (K, 2)
    iterations_used: int
    objective: float
    converged: bool

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.tau, axis=1)

    def cluster_sizes(self) -> np.ndarray:
        return self.tau.sum(axis=0).astype(int)


def _exact_integer_costs(dist2: np.ndarray) -> list[list[int]]:
    """Rescale float costs to exact integers (shared power-of-two factor)."""
    fracs = [[Fraction(float(d)) for d in row] for row in dist2]
    scale = max((f.denominator for row in fracs for f in row), default=1)
    return [[int(f * scale) for f in row] for row in fracs]


class _FlowNetwork:
    """Minimal residual graph with successive-shortest-paths augmentation.

    Costs are exact integers, so shortest-path comparisons are exact and
    the residual graph can never acquire a spurious negative cycle.
    """

    def __init__(self, n_nodes: int) -> None:
        self.n_nodes = n_nodes
        self.head: list[int] = []  # edge -> target node
        self.cap: list[int] = []
        self.cost: list[int] = []
        self.adjacency: list[list[int]] = [[] for _ in range(n_nodes)]

    def add_edge(self, u: int, v: int, cap: int, cost: int) -> int:
        idx = len(self.head)
        self.head.append(v)
        self.cap.append(cap)
        self.cost.append(cost)
        self.adjacency[u].append(idx)
        self.head.append(u)  # residual
        self.cap.append(0)
        self.cost.append(-cost)
        self.adjacency[v].append(idx + 1)
        return idx

    def _shortest_path(self, source: int, sink: int):
        # Bellman-Ford over the fixed edge insertion order; strict
        # improvement only, so the first-found path among equal-cost
        # alternatives wins deterministically.
        dist: list[int | None] = [None] * self.n_nodes
        parent_edge = [-1] * self.n_nodes
        dist[source] = 0
        for _ in range(self.n_nodes):
            changed = False
            for u in range(self.n_nodes):
                du = dist[u]
                if du is None:
                    continue
                for e in self.adjacency[u]:
                    if self.cap[e] <= 0:
                        continue
                    v = self.head[e]
                    nd = du + self.cost[e]
                    if dist[v] is None or nd < dist[v]:
                        dist[v] = nd
                        parent_edge[v] = e
                        changed = True
            if not changed:
                break
        if dist[sink] is None:
            return None
        return parent_edge

    def send(self, source: int, sink: int, amount: int) -> int:
        """Push ``amount`` units one augmenting path at a time; returns
        the flow actually delivered."""
        delivered = 0
        while delivered < amount:
            parent_edge = self._shortest_path(source, sink)
            if parent_edge is None:
                break
            # bottleneck along the path
            bottleneck = amount - delivered
            v = sink
            while v != source:
                e = parent_edge[v]
                bottleneck = min(bottleneck, self.cap[e])
                v = self.head[e ^ 1]
            v = sink
            while v != source:
                e = parent_edge[v]
                self.cap[e] -= bottleneck
                self.cap[e ^ 1] += bottleneck
                v = self.head[e ^ 1]
            delivered += bottleneck
        return delivered


def assign_clusters(points, centroids, config: ClusterConfig) -> np.ndarray:
    """Exact constrained assignment for fixed centroids; returns binary tau."""
    pts = np.asarray(points, dtype=np.float64)
    cents = np.asarray(centroids, dtype=np.float64)
    n, k = pts.shape[0], cents.shape[0]
    if k != config.k:
        raise InfeasibilityError(f"expected {config.k} centroids, got {k}")
    lows, highs = config.windows(n)
    diffs = pts[:, None, :] - cents[None, :, :]
    dist2 = np.einsum("ikd,ikd->ik", diffs, diffs)
    costs = _exact_integer_costs(dist2)

    # Node ids: source | points 1..n | clusters n+1..n+k | slack sink | sink
    source = 0
    cluster0 = n + 1
    slack_sink = n + k + 1
    sink = n + k + 2
    net = _FlowNetwork(n + k + 3)
    for i in range(n):
        net.add_edge(source, 1 + i, 1, 0)
    point_edges = [
        [net.add_edge(1 + i, cluster0 + c, 1, costs[i][c]) for c in range(k)]
        for i in range(n)
    ]
    for c in range(k):
        if lows[c] > 0:
            net.add_edge(cluster0 + c, sink, lows[c], 0)  # mandatory quota
        if highs[c] - lows[c] > 0:
            net.add_edge(cluster0 + c, slack_sink, highs[c] - lows[c], 0)
    surplus = n - sum(lows)
    if surplus > 0:
        net.add_edge(slack_sink, sink, surplus, 0)

    delivered = net.send(source, sink, n)
    if delivered < n:  # cannot happen for windows validated above
        raise InfeasibilityError("size windows admit no complete assignment")

    tau = np.zeros((n, k), dtype=np.int8)
    for i in range(n):
        for c in range(k):
            if net.cap[point_edges[i][c]] == 0:  # forward capacity used up
                tau[i, c] = 1
                break
    return tau


def update_centroids(
    points, tau: np.ndarray, previous_centroids, config: ClusterConfig
) -> np.ndarray:
    """Mean of the members when the cluster is inside its size window
    (and nonempty); otherwise the previous centroid is kept."""
    pts = np.asarray(points, dtype=np.float64)
    prev = np.asarray(previous_centroids, dtype=np.float64)
    lows, highs = config.windows(pts.shape[0])
    out = prev.copy()
    sizes = tau.sum(axis=0)
    for c in range(config.k):
        size = int(sizes[c])
        if size > 0 and lows[c] <= size <= highs[c]:
            members = tau[:, c].astype(bool)
            out[c] = pts[members].mean(axis=0)
    return out


def _objective(points: np.ndarray, tau: np.ndarray, centroids: np.ndarray) -> float:
    diffs = points[:, None, :] - centroids[None, :, :]
    dist2 = np.einsum("ikd,ikd->ik", diffs, diffs)
    return float(np.sum(dist2 * tau))


def _as_points(stations) -> np.ndarray:
    if hasattr(stations, "ndim"):
        return np.asarray(stations, dtype=np.float64)
    if stations and hasattr(stations[0], "latitude"):
        return np.array(
            [[s.latitude, s.longitude] for s in stations], dtype=np.float64
        )
    return np.asarray(stations, dtype=np.float64)


def constrained_kmeans(
    stations,
    config: ClusterConfig,
    on_iteration: Callable[[int, np.ndarray, np.ndarray, float], None] | None = None,
) -> ClusterAssignment:
    """Alternate exact assignment and windowed centroid updates.

    ``stations`` is a StationInfo sequence or a raw (I, 2) coordinate
    array.  Initial centroids are K distinct coordinate rows sampled with
    the config seed.  Stops on an exact centroid fixpoint; if
    ``max_iterations`` passes first, the best iterate seen is returned
    with ``converged=False``.
    """
    points = _as_points(stations)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DegenerateDataError("need a nonempty 2-d coordinate array")
    n = points.shape[0]
    if n < config.k:
        raise InfeasibilityError(f"{n} points cannot fill {config.k} clusters")
    config.windows(n)  # validate feasibility up front

    distinct = np.unique(points, axis=0)
    if distinct.shape[0] < config.k:
        raise DegenerateDataError(
            f"only {distinct.shape[0]} distinct coordinates for {config.k} clusters"
        )
    rng = np.random.default_rng(config.seed)
    pick = rng.choice(distinct.shape[0], size=config.k, replace=False)
    centroids = distinct[pick]

    best: tuple[float, np.ndarray, np.ndarray, int] | None = None
    for iteration in range(1, config.max_iterations + 1):
        tau = assign_clusters(points, centroids, config)
        new_centroids = update_centroids(points, tau, centroids, config)
        objective = _objective(points, tau, new_centroids)
        if on_iteration is not None:
            on_iteration(iteration, tau, new_centroids, objective)
        if best is None or objective < best[0]:
            best = (objective, tau, new_centroids, iteration)
        if np.array_equal(new_centroids, centroids):
            return ClusterAssignment(
                tau=tau,
                centroids=new_centroids,
                iterations_used=iteration,
                objective=objective,
                converged=True,
            )
        centroids = new_centroids
    objective, tau, centroids, _ = best
    return ClusterAssignment(
        tau=tau,
        centroids=centroids,
        iterations_used=config.max_iterations,
        objective=objective,
        converged=False,
    )
