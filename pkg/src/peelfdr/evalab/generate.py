"""Simulation scenario generators.

Grid scenarios place hypotheses on a 50x50 grid over [-100, 100]^2 with a
convex non-null region and signal mean 2.  Tree scenarios use a balanced
binary tree with 1000 nodes and 50 non-nulls placed first in BFS or DFS
order.  DAG scenarios use layered graphs (shallow 4x250, deep 10x100,
triangular 50/100/200/300/350) with a strong-hierarchy-closed non-null set.
Each scenario draws z ~ N(mu, Sigma) with equi-correlation rho and reports
p = 1 - Phi(z) together with the ground-truth null mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from peelfdr import constraints as cons

__all__ = ["ExperimentConfig", "gen_dataset", "gen_correlated_z",
           "SCENARIOS"]

SCENARIOS = ("convex_circle", "convex_ellipse", "convex_polygon",
             "tree_bfs", "tree_dfs",
             "dag_shallow", "dag_deep", "dag_triangular",
             "unstructured")

SIGNAL_MU = 2.0


@dataclass
class ExperimentConfig:
    scenario: str
    case: int = 1
    alpha_grid: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    replicates: int = 100
    rho: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if any(not 0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha grid must lie inside (0, 1)")
        if self.case not in (1, 2, 3):
            raise ValueError("case must be 1, 2, or 3")


def gen_correlated_z(mu, rho: float, rng) -> np.ndarray:
    """Draw z ~ N(mu, (1-rho) I + rho 11') without forming the matrix.

    Nonnegative rho uses a shared-factor construction.  Negative rho
    subtracts a multiple of the sample mean of an i.i.d. draw, then rescales
    each coordinate back to unit variance.
    """
    mu = np.asarray(mu, dtype=float)
    n = len(mu)
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if n > 1 and not -1.0 / (n - 1) < rho < 1.0:
        raise ValueError("rho outside the positive-definite range")
    g = rng.standard_normal(n)
    if rho == 0.0:
        return mu + g
    if rho > 0.0:
        shared = rng.standard_normal()
        return mu + math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * g
    # cov(g - kappa mean(g) 1) has off-diagonal -a/n and diagonal 1 - a/n,
    # with a = 2 kappa - kappa^2; pick a so that the correlation is rho
    a = n * rho / (rho - 1.0)
    kappa = 1.0 - math.sqrt(1.0 - a)
    v = g - kappa * np.mean(g)
    return mu + v / math.sqrt(1.0 - a / n)


def _grid_points() -> np.ndarray:
    axis = np.linspace(-100.0, 100.0, 50)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _convex_nonnull(scenario: str, pts: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    if scenario == "convex_circle":
        return x ** 2 + y ** 2 <= 40.0 ** 2
    if scenario == "convex_ellipse":
        return (x / 70.0) ** 2 + (y / 30.0) ** 2 <= 1.0
    # convex pentagon around the origin
    verts = np.array([[-60.0, -40.0], [50.0, -55.0], [75.0, 10.0],
                      [20.0, 60.0], [-55.0, 45.0]])
    inside = np.ones(len(pts), dtype=bool)
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        edge = b - a
        inside &= edge[0] * (y - a[1]) - edge[1] * (x - a[0]) >= 0
    return inside


def _balanced_tree(n: int):
    parent = np.empty(n, dtype=int)
    parent[0] = -1
    for v in range(1, n):
        parent[v] = (v - 1) // 2
    return parent


def _dfs_order(parent) -> list:
    n = len(parent)
    children = [[] for _ in range(n)]
    for v in range(n):
        if parent[v] >= 0:
            children[parent[v]].append(v)
    order, stack = [], [0]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(reversed(children[v]))
    return order


def _tree_mu(case: int, nonnull: list) -> np.ndarray:
    """Per-non-null means for the three tree signal patterns."""
    k = len(nonnull)
    if case == 1:
        return np.full(k, SIGNAL_MU)
    half = k // 2
    idx = np.argsort(nonnull)
    mu = np.empty(k)
    strong, weak = SIGNAL_MU + 0.5, SIGNAL_MU - 0.5
    if case == 2:
        mu[idx[:half]] = strong
        mu[idx[half:]] = weak
    else:
        mu[idx[:half]] = weak
        mu[idx[half:]] = strong
    return mu


_DAG_LAYERS = {
    "dag_shallow": [250] * 4,
    "dag_deep": [100] * 10,
    "dag_triangular": [50, 100, 200, 300, 350],
}


def _layered_dag(layers, rng):
    """Edges of a layered DAG: each node below the top layer draws two
    parents (with replacement collapsed) from the previous layer."""
    starts = np.concatenate([[0], np.cumsum(layers)])
    edges = []
    for li in range(1, len(layers)):
        lo_prev, hi_prev = starts[li - 1], starts[li]
        for v in range(starts[li], starts[li + 1]):
            k = min(2, hi_prev - lo_prev)
            for u in sorted(set(rng.integers(lo_prev, hi_prev, size=k).tolist())):
                edges.append((int(u), int(v)))
    return edges, starts


def _shp_nonnull(n, edges, starts, k, rng):
    """Grow a k-node non-null set closed under the strong hierarchy: every
    parent of a non-null node is non-null."""
    parents = [[] for _ in range(n)]
    for u, v in edges:
        parents[v].append(u)
    chosen = set()
    frontier = set(range(starts[0], starts[1]))
    while len(chosen) < k and frontier:
        pick = int(rng.choice(sorted(frontier)))
        frontier.discard(pick)
        chosen.add(pick)
        for v in range(n):
            if v not in chosen and v not in frontier and \
                    parents[v] and all(u in chosen for u in parents[v]):
                frontier.add(v)
    return sorted(chosen)


def gen_dataset(config: ExperimentConfig, replicate: int = 0) -> dict:
    """Materialize one replicate: structure is fixed by the config seed,
    noise varies with the replicate index."""
    struct_rng = np.random.default_rng([config.seed, 0])
    noise_rng = np.random.default_rng([config.seed, 1, replicate])
    sc = config.scenario

    if sc.startswith("convex"):
        X = _grid_points()
        nonnull = _convex_nonnull(sc, X)
        mu = np.where(nonnull, SIGNAL_MU, 0.0)
        # fine peel resolution so model-assisted orderings are not forced
        # to discard whole boundary slabs at once
        constraint = cons.convex2d(X, delta=0.005)
    elif sc.startswith("tree"):
        n = 1000
        parent = _balanced_tree(n)
        order = list(range(n)) if sc == "tree_bfs" else _dfs_order(parent)
        ids = order[:50]
        nonnull = np.zeros(n, dtype=bool)
        nonnull[ids] = True
        mu = np.zeros(n)
        mu[ids] = _tree_mu(config.case, ids)
        depth = np.zeros(n)
        for v in range(1, n):
            depth[v] = depth[parent[v]] + 1
        X = np.column_stack([depth, np.arange(n, dtype=float)])
        constraint = cons.tree(parent)
    elif sc.startswith("dag"):
        layers = _DAG_LAYERS[sc]
        n = sum(layers)
        edges, starts = _layered_dag(layers, struct_rng)
        ids = _shp_nonnull(n, edges, starts, 50, struct_rng)
        nonnull = np.zeros(n, dtype=bool)
        nonnull[ids] = True
        mu = np.where(nonnull, SIGNAL_MU, 0.0)
        layer_of = np.searchsorted(starts[1:], np.arange(n), side="right")
        X = np.column_stack([layer_of.astype(float), np.arange(n, dtype=float)])
        constraint = cons.dag(n, edges, mode="strong")
    else:  # unstructured
        n = 1000
        X = struct_rng.uniform(0.0, 1.0, size=(n, 2))
        nonnull = np.zeros(n, dtype=bool)
        nonnull[struct_rng.choice(n, size=100, replace=False)] = True
        mu = np.where(nonnull, SIGNAL_MU, 0.0)
        constraint = cons.constraint_none()

    z = gen_correlated_z(mu, config.rho, noise_rng)
    p = 1.0 - ndtr(z)
    return {
        "X": X,
        "p": p,
        "h0": ~nonnull,
        "mu": mu,
        "constraint": constraint,
        "seed": config.seed,
        "replicate": replicate,
    }
