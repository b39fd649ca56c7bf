import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peelfdr import accum, constraints as cons, engine, scores
from peelfdr.evalab import baselines, experiment, generate

SEQ = accum.seqstep(0.5)


def bh_by_enumeration(p, alpha):
    """Step-up definition checked over every cutoff k."""
    p = np.asarray(p, dtype=float)
    n = len(p)
    order = np.argsort(p, kind="stable")
    kstar = 0
    for k in range(1, n + 1):
        if p[order[k - 1]] <= alpha * k / n:
            kstar = k
    return set(int(i) for i in order[:kstar])


class TestBH:
    def test_hand_case(self):
        # classic example: p = (0.01, 0.02, 0.165, 0.8), alpha = 0.1
        # thresholds 0.025, 0.05, 0.075, 0.1 -> reject first two
        got = baselines.bh([0.01, 0.02, 0.165, 0.8], 0.1)
        assert got == {0, 1}

    def test_none_rejected(self):
        assert baselines.bh([0.5, 0.9], 0.05) == set()

    def test_all_rejected(self):
        assert baselines.bh([0.001, 0.002, 0.01], 0.1) == {0, 1, 2}

    def test_step_up_not_step_down(self):
        # p_2 alone fails its threshold but p_3 rescues both
        p = [0.04, 0.10, 0.145]
        got = baselines.bh(p, 0.15)
        assert got == {0, 1, 2}

    def test_enumeration_oracle_small(self):
        rng = np.random.default_rng(0)
        for trial in range(300):
            n = int(rng.integers(1, 6))
            p = np.round(rng.uniform(size=n), 3)
            alpha = float(rng.choice([0.05, 0.1, 0.2, 0.5]))
            assert baselines.bh(p, alpha) == bh_by_enumeration(p, alpha), \
                (p, alpha)


class TestStoreyBH:
    def test_null_inflation_estimate(self):
        # pi0-hat = (1 + #{p > 0.5}) / (n * 0.5)
        p = np.array([0.01, 0.2, 0.6, 0.7, 0.9])
        # pi0-hat = 4/2.5 = 1.6 -> effective alpha shrinks
        got = baselines.storey_bh(p, 0.1)
        assert got == bh_by_enumeration(p, 0.1 / 1.6)

    def test_enumeration_oracle_small(self):
        rng = np.random.default_rng(1)
        for trial in range(300):
            n = int(rng.integers(1, 6))
            p = np.round(rng.uniform(size=n), 3)
            alpha = float(rng.choice([0.05, 0.1, 0.2]))
            pi0 = (1 + int(np.sum(p > 0.5))) / (n * 0.5)
            want = bh_by_enumeration(p, alpha / pi0)
            assert baselines.storey_bh(p, alpha) == want, (p, alpha)

    def test_more_powerful_under_signal(self):
        rng = np.random.default_rng(2)
        p = np.concatenate([rng.uniform(0, 0.001, 50), rng.uniform(size=50)])
        assert len(baselines.storey_bh(p, 0.1)) >= len(baselines.bh(p, 0.1))


class TestFixedOrder:
    def test_hand_case(self):
        # h = (0, 0, 2, 0) along the order; h_max = 2
        # est(k): (2+0)/2=1, 2/3, (2+2)/4=1, 2/5... alpha=0.7 -> k=2
        p = np.array([0.1, 0.2, 0.9, 0.3])
        k = baselines.fixed_order_accumulation(p, SEQ, 0.7)
        assert k == 2

    def test_zero_when_hopeless(self):
        k = baselines.fixed_order_accumulation(np.array([0.9, 0.9]), SEQ, 0.1)
        assert k == 0

    def test_equals_engine_degenerate_run(self):
        # peeling in reverse g-order one at a time is exactly the fixed-order
        # rule, so the engine must stop at the same prefix
        rng = np.random.default_rng(3)
        for trial in range(100):
            n = int(rng.integers(2, 30))
            p = rng.uniform(size=n) ** rng.choice([1.0, 3.0])
            alpha = float(rng.choice([0.05, 0.1, 0.2, 0.4]))
            g = accum.mask(SEQ, p)
            order = np.argsort(g, kind="stable")
            k = baselines.fixed_order_accumulation(p[order], SEQ, alpha)
            want = set(int(i) for i in order[:k])

            X = np.arange(n, dtype=float).reshape(-1, 1)
            sess = engine.create_session((X, p), SEQ, alpha=alpha)
            while not sess.halted:
                alive = sess.current
                worst = alive[np.argmax(g[alive])]
                engine.peel(sess, [worst])
            got = set(int(i) for i in sess.rejection)
            assert got == want, (p, alpha)


class TestFastTreeCanonical:
    def test_matches_engine(self):
        rng = np.random.default_rng(4)
        for trial in range(25):
            n = int(rng.integers(3, 50))
            parent = [-1] + [int(rng.integers(v)) for v in range(1, n)]
            p = rng.uniform(size=n) ** rng.choice([1.0, 4.0])
            alpha = float(rng.choice([0.1, 0.2, 0.4]))
            c = cons.tree(parent)
            fast = experiment.fast_tree_canonical(p, SEQ, parent, alpha)

            X = np.arange(n, dtype=float).reshape(-1, 1)
            sess = engine.create_session((X, p), SEQ, constraint=c,
                                         alpha=alpha)
            engine.run_auto(sess, scores.CanonicalRule())
            assert fast == set(int(i) for i in sess.rejection), \
                (parent, p, alpha)


class TestCanonicalAlphaGrid:
    def test_matches_per_level_engine_runs(self):
        # one trajectory read at several levels must equal separate runs
        rng = np.random.default_rng(11)
        alphas = (0.05, 0.1, 0.2)
        for trial in range(10):
            n = int(rng.integers(20, 70))
            X = rng.uniform(size=(n, 2))
            p = rng.uniform(size=n) ** rng.choice([1.0, 3.0])
            c = cons.convex2d(X, delta=0.05)
            data = {"X": X, "p": p, "constraint": c, "seed": trial}
            grid = experiment.canonical_alpha_grid(data, SEQ, alphas)
            for a in alphas:
                sess = engine.create_session((X, p), SEQ, constraint=c,
                                             alpha=a, seed=trial)
                engine.run_auto(sess, scores.CanonicalRule())
                assert grid[a] == set(int(i) for i in sess.rejection), \
                    (trial, a)


class TestFdpPower:
    def test_empty_counts_zero(self):
        assert experiment.fdp_power([], [True, False]) == (0.0, 0.0)

    def test_values(self):
        h0 = np.array([True, True, False, False])
        fdp, pw = experiment.fdp_power([0, 2, 3], h0)
        assert fdp == pytest.approx(1 / 3)
        assert pw == pytest.approx(1.0)


class TestGenerate:
    def test_shapes_and_determinism(self):
        for scenario, n in (("convex_circle", 2500), ("tree_bfs", 1000),
                            ("dag_shallow", 1000), ("unstructured", 1000)):
            cfg = generate.ExperimentConfig(scenario=scenario,
                                            alpha_grid=(0.1,), replicates=2,
                                            seed=5)
            d1 = generate.gen_dataset(cfg, replicate=0)
            d2 = generate.gen_dataset(cfg, replicate=0)
            assert len(d1["p"]) == n
            assert np.array_equal(d1["p"], d2["p"])
            d3 = generate.gen_dataset(cfg, replicate=1)
            assert not np.array_equal(d1["p"], d3["p"])
            # structure is shared across replicates
            assert np.array_equal(d1["h0"], d3["h0"])

    def test_null_p_uniform(self):
        cfg = generate.ExperimentConfig(scenario="convex_circle",
                                        alpha_grid=(0.1,), replicates=1,
                                        seed=0)
        d = generate.gen_dataset(cfg, replicate=0)
        nulls = d["p"][d["h0"]]
        # Kolmogorov-Smirnov against U(0,1)
        from scipy.stats import kstest
        assert kstest(nulls, "uniform").pvalue > 1e-4

    def test_signal_smaller_p(self):
        cfg = generate.ExperimentConfig(scenario="convex_circle",
                                        alpha_grid=(0.1,), replicates=1,
                                        seed=0)
        d = generate.gen_dataset(cfg, replicate=0)
        assert d["p"][~d["h0"]].mean() < d["p"][d["h0"]].mean() - 0.2

    def test_tree_cases_differ(self):
        mus = []
        for case in (1, 2, 3):
            cfg = generate.ExperimentConfig(scenario="tree_bfs", case=case,
                                            alpha_grid=(0.1,), replicates=1,
                                            seed=0)
            mus.append(generate.gen_dataset(cfg, replicate=0)["mu"])
        assert not np.array_equal(mus[1], mus[2])
        assert np.isclose(mus[0].sum(), mus[1].sum())

    def test_dag_constraint_consistency(self):
        for scenario in ("dag_shallow", "dag_deep", "dag_triangular"):
            cfg = generate.ExperimentConfig(scenario=scenario,
                                            alpha_grid=(0.1,), replicates=1,
                                            seed=1)
            d = generate.gen_dataset(cfg, replicate=0)
            c = d["constraint"]
            assert c.kind == "dag_strong"
            # the non-null set respects strong heredity, so a perfect
            # procedure could reject exactly the signals
            assert cons.in_constraint(c, np.nonzero(~d["h0"])[0])

    def test_validation(self):
        with pytest.raises(ValueError):
            generate.ExperimentConfig(scenario="bogus", alpha_grid=(0.1,))
        with pytest.raises(ValueError):
            generate.ExperimentConfig(scenario="tree_bfs", case=9,
                                      alpha_grid=(0.1,))
        with pytest.raises(ValueError):
            generate.ExperimentConfig(scenario="tree_bfs", alpha_grid=(1.5,))


class TestCorrelatedZ:
    def test_positive_rho(self):
        rng = np.random.default_rng(0)
        n, reps = 400, 1200
        rho = 0.5
        cors = []
        for _ in range(reps):
            z = generate.gen_correlated_z(np.zeros(n), rho, rng)
            cors.append(np.mean(z[:-1] * z[1:]))
        # every off-diagonal pair has covariance rho; the shared factor
        # correlates the per-replicate averages, so the SE stays near
        # 1/sqrt(reps) despite the many pairs
        assert np.mean(cors) == pytest.approx(rho, abs=0.06)
        # marginal variance is 1; the within-draw spread is only 1 - rho
        # because the shared factor moves the whole vector together
        draws = np.array([generate.gen_correlated_z(np.zeros(n), rho, rng)[0]
                          for _ in range(3000)])
        assert np.var(draws) == pytest.approx(1.0, abs=0.1)

    def test_negative_rho(self):
        rng = np.random.default_rng(1)
        n = 200
        rho = -0.5 / n
        zs = np.array([generate.gen_correlated_z(np.zeros(n), rho, rng)
                       for _ in range(4000)])
        emp = np.cov(zs[:, 0], zs[:, 1])[0, 1]
        assert emp == pytest.approx(rho, abs=0.02)
        assert np.var(zs[:, 0]) == pytest.approx(1.0, abs=0.05)

    def test_mean_shift_preserved(self):
        rng = np.random.default_rng(2)
        mu = np.linspace(0, 3, 100)
        zs = np.array([generate.gen_correlated_z(mu, 0.5, rng)
                       for _ in range(2000)])
        assert np.allclose(zs.mean(axis=0), mu, atol=0.15)


class TestRunExperiment:
    def test_rows_and_determinism(self):
        cfg = generate.ExperimentConfig(scenario="unstructured",
                                        alpha_grid=(0.1, 0.2), replicates=3,
                                        seed=9)
        rows1 = experiment.run_experiment(cfg, methods=("bh", "storey_bh"))
        rows2 = experiment.run_experiment(cfg, methods=("bh", "storey_bh"))
        assert rows1 == rows2
        assert len(rows1) == 4
        for row in rows1:
            assert 0.0 <= row["fdr"] <= 1.0
            assert 0.0 <= row["power"] <= 1.0
            assert row["replicates"] == 3

    def test_csv_round_trip(self, tmp_path):
        cfg = generate.ExperimentConfig(scenario="unstructured",
                                        alpha_grid=(0.1,), replicates=2,
                                        seed=0)
        rows = experiment.run_experiment(cfg, methods=("bh",))
        path = tmp_path / "results.csv"
        experiment.write_results_csv(path, rows, seed=0)
        text = path.read_text()
        assert text.startswith("# seed=0\n")
        assert "bh" in text


class TestThresholdRelation:
    def test_relation_close(self):
        out = experiment.threshold_relation_check(seed=0)
        assert abs(out["lhs_bh"] / out["rhs"] - 1) < 0.25
        assert abs(out["lhs_star"] / out["rhs"] - 1) < 0.25

    def test_high_pstar_sets_agree(self):
        out = experiment.threshold_relation_check(pstar=0.99, seed=1,
                                                  n=20000)
        sym = len(out["bh_set"] ^ out["star_set"])
        denom = max(1, len(out["bh_set"] | out["star_set"]))
        assert sym / denom <= 0.10


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1,
                max_size=5),
       st.sampled_from([0.05, 0.1, 0.2, 0.3]))
@settings(max_examples=150, deadline=None)
def test_bh_matches_enumeration_property(p, alpha):
    assert baselines.bh(p, alpha) == bh_by_enumeration(p, alpha)
