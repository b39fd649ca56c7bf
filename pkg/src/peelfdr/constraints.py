"""Structural constraints on rejection sets and candidate generation.

A constraint defines which subsets of hypotheses are admissible rejection
sets, and which subsets may be peeled off the current set without leaving
the admissible family: directional boundary slabs for convex regions, axis
cuts for boxes, leaf removals for rooted trees, and heredity-preserving
removals for DAGs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConstraintSpec",
    "constraint_none",
    "convex2d",
    "axisbox",
    "tree",
    "dag",
    "in_constraint",
    "candidates",
    "load_tree_csv",
    "load_dag_csv",
    "constraint_to_json",
    "constraint_from_json",
]

KINDS = ("none", "convex2d", "axisbox", "tree", "dag_strong", "dag_weak")

_HULL_TOL = 1e-9


@dataclass
class ConstraintSpec:
    kind: str = "none"
    points: np.ndarray | None = None      # convex2d / axisbox coordinates
    parent: np.ndarray | None = None      # tree: parent id per node, -1 at root
    edges: list | None = None             # dag: (parent, child) arcs
    delta: float = 0.02                   # peel fraction for convex2d / axisbox
    angles: int = 100                     # directional probes for convex2d
    children: list = field(default_factory=list, repr=False)
    parents: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int | None:
        if self.points is not None:
            return len(self.points)
        if self.parent is not None:
            return len(self.parent)
        if self.parents:
            return len(self.parents)
        return None


def constraint_none() -> ConstraintSpec:
    return ConstraintSpec(kind="none")


def convex2d(points, delta: float = 0.02, angles: int = 100) -> ConstraintSpec:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("convex2d requires n x 2 coordinates")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return ConstraintSpec(kind="convex2d", points=pts, delta=delta, angles=angles)


def axisbox(points, delta: float = 0.02) -> ConstraintSpec:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError("axisbox requires n x d coordinates")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    return ConstraintSpec(kind="axisbox", points=pts, delta=delta)


def tree(parent) -> ConstraintSpec:
    par = np.asarray(parent, dtype=int)
    n = len(par)
    roots = np.nonzero(par < 0)[0]
    if len(roots) != 1:
        raise ValueError(f"tree must have exactly one root, found {len(roots)}")
    if np.any(par >= n):
        raise ValueError("parent pointer out of range")
    children = [[] for _ in range(n)]
    for v in range(n):
        if par[v] >= 0:
            children[par[v]].append(v)
    # cycle check: every node must reach the root
    depth = np.full(n, -1, dtype=int)
    depth[roots[0]] = 0
    for v in range(n):
        chain = []
        u = v
        while depth[u] < 0:
            chain.append(u)
            u = par[u]
            if u < 0 or len(chain) > n:
                raise ValueError("tree contains a cycle or dangling parent")
        for k, w in enumerate(reversed(chain)):
            depth[w] = depth[u] + k + 1
    return ConstraintSpec(kind="tree", parent=par, children=children)


def dag(n: int, edges, mode: str = "strong") -> ConstraintSpec:
    if mode not in ("strong", "weak"):
        raise ValueError("mode must be 'strong' or 'weak'")
    parents = [[] for _ in range(n)]
    children = [[] for _ in range(n)]
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise ValueError("edge endpoint out of range")
        parents[v].append(u)
        children[u].append(v)
    # acyclicity via Kahn's algorithm
    indeg = [len(ps) for ps in parents]
    queue = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if seen != n:
        raise ValueError("graph contains a cycle")
    return ConstraintSpec(kind=f"dag_{mode}", edges=[tuple(e) for e in edges],
                          parents=parents, children=children)


# membership -----------------------------------------------------------


def in_constraint(c: ConstraintSpec, R) -> bool:
    """Whether the set R is an admissible rejection set."""
    R = set(int(i) for i in R)
    n = c.n
    if n is not None and R and (min(R) < 0 or max(R) >= n):
        raise ValueError("hypothesis id out of range")
    if c.kind == "none":
        return True
    if not R:
        return True
    if c.kind == "tree":
        root = int(np.nonzero(c.parent < 0)[0][0])
        if root not in R:
            return False
        return all(v == root or int(c.parent[v]) in R for v in R)
    if c.kind == "dag_strong":
        return all(all(p in R for p in c.parents[v]) for v in R)
    if c.kind == "dag_weak":
        return all(not c.parents[v] or any(p in R for p in c.parents[v])
                   for v in R)
    if c.kind == "convex2d":
        return _no_interior_outsider_hull(c.points, R)
    if c.kind == "axisbox":
        return _no_interior_outsider_box(c.points, R)
    raise ValueError(f"unknown constraint kind {c.kind!r}")


def _no_interior_outsider_hull(points, R) -> bool:
    from scipy.spatial import ConvexHull, QhullError

    inside = np.array(sorted(R), dtype=int)
    outside = np.setdiff1d(np.arange(len(points)), inside)
    if len(outside) == 0 or len(inside) < 3:
        return True
    try:
        hull = ConvexHull(points[inside])
    except QhullError:
        return True   # degenerate hull has no interior
    eqs = hull.equations  # rows [a, b, offset]: a*x + b*y + offset <= 0 inside
    vals = points[outside] @ eqs[:, :2].T + eqs[:, 2]
    strictly_inside = np.all(vals < -_HULL_TOL, axis=1)
    return not bool(strictly_inside.any())


def _no_interior_outsider_box(points, R) -> bool:
    inside = np.array(sorted(R), dtype=int)
    outside = np.setdiff1d(np.arange(len(points)), inside)
    if len(outside) == 0:
        return True
    lo = points[inside].min(axis=0)
    hi = points[inside].max(axis=0)
    q = points[outside]
    strictly_inside = np.all((q > lo + _HULL_TOL) & (q < hi - _HULL_TOL), axis=1)
    return not bool(strictly_inside.any())


# candidate generation -------------------------------------------------


def candidates(c: ConstraintSpec, R) -> list[list[int]]:
    """Peelable candidate sets for the current set R, as sorted id lists."""
    R = sorted(int(i) for i in R)
    if not R:
        return []
    if c.kind == "none":
        return [[i] for i in R]
    if c.kind == "convex2d":
        return candidates_convex(c, R)
    if c.kind == "axisbox":
        return candidates_box(c, R)
    if c.kind == "tree":
        return candidates_tree(c, R)
    if c.kind in ("dag_strong", "dag_weak"):
        return candidates_dag(c, R)
    raise ValueError(f"unknown constraint kind {c.kind!r}")


def _topk_by_projection(ids: np.ndarray, proj: np.ndarray, k: int) -> tuple:
    order = np.lexsort((ids, -proj))
    return tuple(sorted(ids[order[:k]].tolist()))


def candidates_convex(c: ConstraintSpec, R) -> list[list[int]]:
    if c.kind != "convex2d":
        raise ValueError("constraint is not convex2d")
    ids = np.asarray(sorted(R), dtype=int)
    k = max(1, math.ceil(c.delta * len(ids)))
    thetas = 2.0 * math.pi * np.arange(c.angles) / c.angles
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])
    proj = c.points[ids] @ dirs.T  # |R| x angles
    seen = set()
    out = []
    for j in range(c.angles):
        cand = _topk_by_projection(ids, proj[:, j], k)
        if cand not in seen:
            seen.add(cand)
            out.append(list(cand))
    return out


def candidates_box(c: ConstraintSpec, R) -> list[list[int]]:
    if c.kind != "axisbox":
        raise ValueError("constraint is not axisbox")
    ids = np.asarray(sorted(R), dtype=int)
    k = max(1, math.ceil(c.delta * len(ids)))
    seen = set()
    out = []
    for j in range(c.points.shape[1]):
        xj = c.points[ids, j]
        lo_sorted = np.sort(xj)
        v_lo = lo_sorted[k - 1]
        v_hi = lo_sorted[len(ids) - k]
        for cand in (tuple(ids[xj <= v_lo].tolist()),
                     tuple(ids[xj >= v_hi].tolist())):
            if cand not in seen:
                seen.add(cand)
                out.append(list(cand))
    return out


def candidates_tree(c: ConstraintSpec, R) -> list[list[int]]:
    if c.kind != "tree":
        raise ValueError("constraint is not a tree")
    if not in_constraint(c, R):
        raise ValueError("current set does not form a rooted subtree")
    rset = set(R)
    return [[v] for v in sorted(rset)
            if not any(ch in rset for ch in c.children[v])]


def candidates_dag(c: ConstraintSpec, R) -> list[list[int]]:
    if c.kind not in ("dag_strong", "dag_weak"):
        raise ValueError("constraint is not a DAG")
    if not in_constraint(c, R):
        raise ValueError("current set violates the heredity principle")
    rset = set(R)
    if c.kind == "dag_strong":
        return [[v] for v in sorted(rset)
                if not any(ch in rset for ch in c.children[v])]
    out = []
    for v in sorted(rset):
        ok = True
        for ch in c.children[v]:
            if ch in rset and not any(p in rset and p != v
                                      for p in c.parents[ch]):
                ok = False
                break
        if ok:
            out.append([v])
    return out


# structure files ------------------------------------------------------


def load_tree_csv(path) -> ConstraintSpec:
    """Read a child,parent CSV (root row has an empty parent field)."""
    import csv

    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "child":
                continue
            child = int(row[0])
            par = row[1].strip() if len(row) > 1 else ""
            rows.append((child, int(par) if par else -1))
    n = max(r[0] for r in rows) + 1
    parent = np.full(n, -2, dtype=int)
    for child, par in rows:
        parent[child] = par
    if np.any(parent == -2):
        raise ValueError("tree file does not cover a dense id range")
    return tree(parent)


def load_dag_csv(path, mode: str = "strong") -> ConstraintSpec:
    """Read a child,parent CSV with one row per arc; roots may be absent."""
    import csv

    edges = []
    max_id = -1
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "child":
                continue
            child = int(row[0])
            max_id = max(max_id, child)
            par = row[1].strip() if len(row) > 1 else ""
            if par:
                edges.append((int(par), child))
                max_id = max(max_id, int(par))
    return dag(max_id + 1, edges, mode=mode)


# serialization --------------------------------------------------------


def constraint_to_json(c: ConstraintSpec) -> dict:
    out = {"kind": c.kind}
    if c.kind in ("convex2d", "axisbox"):
        out["delta"] = c.delta
    if c.kind == "convex2d":
        out["angles"] = c.angles
    if c.kind == "tree":
        out["parent"] = [int(v) for v in c.parent]
    if c.kind in ("dag_strong", "dag_weak"):
        out["n"] = c.n
        out["edges"] = [[int(u), int(v)] for u, v in c.edges]
    return out


def constraint_from_json(obj: dict, points=None) -> ConstraintSpec:
    kind = obj.get("kind", "none")
    if kind == "none":
        return constraint_none()
    if kind == "convex2d":
        if points is None:
            raise ValueError("convex2d constraint requires coordinates")
        return convex2d(points, delta=obj.get("delta", 0.02),
                        angles=obj.get("angles", 100))
    if kind == "axisbox":
        if points is None:
            raise ValueError("axisbox constraint requires coordinates")
        return axisbox(points, delta=obj.get("delta", 0.02))
    if kind == "tree":
        return tree(obj["parent"])
    if kind in ("dag_strong", "dag_weak"):
        return dag(obj["n"], [tuple(e) for e in obj["edges"]],
                   mode=kind.split("_")[1])
    raise ValueError(f"unknown constraint kind {kind!r}")
