import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peelfdr import constraints as cons


def brute_force_admissible(c, n):
    """Enumerate all admissible subsets of [n] straight from the definition."""
    out = []
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            if cons.in_constraint(c, combo):
                out.append(set(combo))
    return out


class TestNone:
    def test_everything_admissible(self):
        c = cons.constraint_none()
        assert cons.in_constraint(c, [])
        assert cons.in_constraint(c, [0, 5, 17])

    def test_candidates_are_singletons(self):
        c = cons.constraint_none()
        assert cons.candidates(c, [3, 1, 2]) == [[1], [2], [3]]


class TestTree:
    # 0 -> {1, 2}, 1 -> {3, 4}
    PARENT = [-1, 0, 0, 1, 1]

    def test_membership(self):
        c = cons.tree(self.PARENT)
        assert cons.in_constraint(c, [0, 1, 2, 3, 4])
        assert cons.in_constraint(c, [0, 1, 3])
        assert cons.in_constraint(c, [0])
        assert cons.in_constraint(c, [])
        assert not cons.in_constraint(c, [1, 3])       # missing root
        assert not cons.in_constraint(c, [0, 3])       # missing 3's parent
        assert not cons.in_constraint(c, [0, 2, 4])    # 4's parent absent

    def test_candidates_are_leaves(self):
        c = cons.tree(self.PARENT)
        assert cons.candidates(c, [0, 1, 2, 3, 4]) == [[2], [3], [4]]
        assert cons.candidates(c, [0, 1, 3]) == [[3]]
        assert cons.candidates(c, [0]) == [[0]]

    def test_candidates_reject_invalid_set(self):
        c = cons.tree(self.PARENT)
        with pytest.raises(ValueError):
            cons.candidates(c, [1, 3])

    def test_closure_under_peel(self):
        # removing any candidate keeps the set admissible
        c = cons.tree(self.PARENT)
        rng = np.random.default_rng(0)
        R = set(range(5))
        while R:
            cands = cons.candidates(c, R)
            pick = cands[rng.integers(len(cands))]
            R -= set(pick)
            assert cons.in_constraint(c, R)

    def test_two_roots_rejected(self):
        with pytest.raises(ValueError):
            cons.tree([-1, -1, 0])

    def test_cycle_rejected(self):
        with pytest.raises(ValueError):
            cons.tree([-1, 2, 1])

    def test_brute_force_subtrees(self):
        c = cons.tree(self.PARENT)
        admissible = brute_force_admissible(c, 5)
        # rooted subtrees of this shape, counted by hand: {}, {0}, {0,1},
        # {0,2}, {0,1,2}, {0,1,3}, {0,1,4}, {0,1,3,4}, {0,1,2,3},
        # {0,1,2,4}, {0,1,2,3,4}, {0,1,3,4,2}... enumerate via recursion
        def count(v):
            total = 1
            for ch in c.children[v]:
                total *= count(ch) + 1
            return total
        assert len(admissible) == count(0) + 1  # + empty set


class TestDag:
    # diamond: 0 -> 1, 0 -> 2, {1,2} -> 3
    EDGES = [(0, 1), (0, 2), (1, 3), (2, 3)]

    def test_strong_membership(self):
        c = cons.dag(4, self.EDGES, mode="strong")
        assert cons.in_constraint(c, [0, 1, 2, 3])
        assert cons.in_constraint(c, [0, 1])
        assert not cons.in_constraint(c, [0, 1, 3])   # 3 needs both parents
        assert not cons.in_constraint(c, [1])

    def test_weak_membership(self):
        c = cons.dag(4, self.EDGES, mode="weak")
        assert cons.in_constraint(c, [0, 1, 3])       # one parent is enough
        assert not cons.in_constraint(c, [0, 3])
        assert not cons.in_constraint(c, [3])

    def test_strong_candidates(self):
        c = cons.dag(4, self.EDGES, mode="strong")
        assert cons.candidates(c, [0, 1, 2, 3]) == [[3]]
        assert cons.candidates(c, [0, 1, 2]) == [[1], [2]]

    def test_weak_candidates(self):
        c = cons.dag(4, self.EDGES, mode="weak")
        # 3 is kept alive by either parent, so removing 1 or 2 alone is fine
        assert cons.candidates(c, [0, 1, 2, 3]) == [[1], [2], [3]]
        # in {0,1,3}, removing 1 would orphan 3
        assert cons.candidates(c, [0, 1, 3]) == [[3]]

    def test_closure_under_peel_brute(self):
        for mode in ("strong", "weak"):
            c = cons.dag(4, self.EDGES, mode=mode)
            admissible = brute_force_admissible(c, 4)
            for R in admissible:
                for cand in cons.candidates(c, R):
                    assert cons.in_constraint(c, R - set(cand)), \
                        (mode, R, cand)

    def test_candidates_complete_brute(self):
        # every single-node removal that stays admissible is offered
        for mode in ("strong", "weak"):
            c = cons.dag(4, self.EDGES, mode=mode)
            admissible = brute_force_admissible(c, 4)
            for R in admissible:
                if not R:
                    continue
                offered = {tuple(x) for x in cons.candidates(c, R)}
                for v in R:
                    if cons.in_constraint(c, R - {v}):
                        assert (v,) in offered, (mode, R, v)

    def test_cycle_rejected(self):
        with pytest.raises(ValueError):
            cons.dag(3, [(0, 1), (1, 2), (2, 0)])

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            cons.dag(2, [], mode="medium")


class TestConvex2d:
    def grid(self):
        xs = np.linspace(-1, 1, 7)
        return np.array([[a, b] for a in xs for b in xs])

    def test_full_and_empty(self):
        pts = self.grid()
        c = cons.convex2d(pts, delta=0.05)
        assert cons.in_constraint(c, range(len(pts)))
        assert cons.in_constraint(c, [])

    def test_hole_detected(self):
        pts = self.grid()
        c = cons.convex2d(pts, delta=0.05)
        R = set(range(len(pts))) - {24}  # 24 = (0, 0), strictly interior
        assert not cons.in_constraint(c, R)

    def test_halfplane_ok(self):
        pts = self.grid()
        c = cons.convex2d(pts, delta=0.05)
        R = [i for i, q in enumerate(pts) if q[0] <= 0.01]
        assert cons.in_constraint(c, R)

    def test_candidate_size(self):
        pts = self.grid()
        c = cons.convex2d(pts, delta=0.1)
        R = list(range(len(pts)))
        k = int(np.ceil(0.1 * len(R)))
        for cand in cons.candidates(c, R):
            assert len(cand) == k

    def test_closure_under_peel(self):
        pts = self.grid()
        c = cons.convex2d(pts, delta=0.08)
        rng = np.random.default_rng(3)
        R = set(range(len(pts)))
        while R:
            cands = cons.candidates(c, R)
            assert cands
            pick = cands[rng.integers(len(cands))]
            assert set(pick) <= R
            R -= set(pick)
            assert cons.in_constraint(c, R)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            cons.convex2d(np.zeros((5, 3)))
        with pytest.raises(ValueError):
            cons.convex2d(np.zeros((5, 2)), delta=0.0)


class TestAxisbox:
    def test_membership_3d(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(size=(60, 3))
        c = cons.axisbox(pts, delta=0.1)
        keep = [i for i, q in enumerate(pts) if np.all(q <= 0.7)]
        assert cons.in_constraint(c, keep)
        # poke a hole strictly inside the box of the kept points
        interior = [i for i in keep if np.all(pts[i] >= 0.2)
                    and np.all(pts[i] <= 0.5)]
        if interior:
            assert not cons.in_constraint(c, set(keep) - {interior[0]})

    def test_candidates_are_axis_cuts(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(size=(40, 2))
        c = cons.axisbox(pts, delta=0.1)
        R = list(range(40))
        cands = cons.candidates(c, R)
        assert 1 <= len(cands) <= 4  # lo/hi per dimension, dedup allowed
        for cand in cands:
            assert cons.in_constraint(c, set(R) - set(cand))

    def test_peel_to_empty(self):
        rng = np.random.default_rng(4)
        pts = rng.uniform(size=(25, 2))
        c = cons.axisbox(pts, delta=0.2)
        R = set(range(25))
        for _ in range(100):
            if not R:
                break
            pick = cons.candidates(c, R)[0]
            R -= set(pick)
            assert cons.in_constraint(c, R)
        assert not R


class TestCsvLoaders:
    def test_tree_round_trip(self, tmp_path):
        path = tmp_path / "tree.csv"
        path.write_text("child,parent\n0,\n1,0\n2,0\n3,1\n")
        c = cons.load_tree_csv(path)
        assert c.kind == "tree"
        assert list(c.parent) == [-1, 0, 0, 1]

    def test_tree_sparse_ids_rejected(self, tmp_path):
        path = tmp_path / "tree.csv"
        path.write_text("child,parent\n0,\n2,0\n")
        with pytest.raises(ValueError):
            cons.load_tree_csv(path)

    def test_dag_loader(self, tmp_path):
        path = tmp_path / "dag.csv"
        path.write_text("child,parent\n0,\n1,0\n2,0\n3,1\n3,2\n")
        c = cons.load_dag_csv(path, mode="weak")
        assert c.kind == "dag_weak"
        assert sorted(c.edges) == [(0, 1), (0, 2), (1, 3), (2, 3)]


class TestSerialization:
    def test_round_trip_all_kinds(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(size=(20, 2))
        specs = [
            cons.constraint_none(),
            cons.convex2d(pts, delta=0.1, angles=36),
            cons.axisbox(pts, delta=0.15),
            cons.tree([-1, 0, 0, 1]),
            cons.dag(4, [(0, 1), (0, 2), (1, 3)], mode="strong"),
            cons.dag(4, [(0, 1), (0, 2), (1, 3)], mode="weak"),
        ]
        for c in specs:
            blob = json.loads(json.dumps(cons.constraint_to_json(c)))
            back = cons.constraint_from_json(blob, points=pts)
            assert back.kind == c.kind
            R = [0, 1, 2]
            assert cons.in_constraint(back, R) == cons.in_constraint(c, R)

    def test_convex_needs_points(self):
        with pytest.raises(ValueError):
            cons.constraint_from_json({"kind": "convex2d", "delta": 0.1})


@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10 ** 6))
@settings(max_examples=60, deadline=None)
def test_random_tree_peel_closure(n, seed):
    rng = np.random.default_rng(seed)
    parent = np.array([-1] + [int(rng.integers(v)) for v in range(1, n)])
    c = cons.tree(parent)
    R = set(range(n))
    while R:
        cands = cons.candidates(c, R)
        assert cands
        pick = cands[rng.integers(len(cands))]
        R -= set(pick)
        assert cons.in_constraint(c, R)


@given(st.integers(min_value=3, max_value=6), st.integers(min_value=0, max_value=10 ** 6))
@settings(max_examples=40, deadline=None)
def test_random_dag_candidate_closure(n, seed):
    rng = np.random.default_rng(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < 0.5]
    for mode in ("strong", "weak"):
        c = cons.dag(n, edges, mode=mode)
        R = set(range(n))
        while R:
            cands = cons.candidates(c, R)
            assert cands, (mode, edges, R)
            pick = cands[rng.integers(len(cands))]
            R -= set(pick)
            assert cons.in_constraint(c, R)
