import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from peelfdr import engine
from peelfdr.cli import main
from peelfdr.evalab import wavelet as wv
from peelfdr.service import create_app


@pytest.fixture
def runner():
    return CliRunner()


def write_dataset(path, seed=0, n=60):
    rng = np.random.default_rng(seed)
    p = np.concatenate([rng.uniform(0, 0.001, n // 4),
                        rng.uniform(size=n - n // 4)])
    X = rng.uniform(size=(n, 2))
    engine.save_dataset_csv(path, X, p)
    return X, p


class TestRun:
    def test_outputs_and_seed_header(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_dataset(data)
        out = tmp_path / "job"
        res = runner.invoke(main, ["run", "--data", str(data),
                                   "--alpha", "0.2", "--seed", "5",
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        lines = (tmp_path / "job.rejections.csv").read_text().splitlines()
        assert lines[0] == "# seed=5"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 60
        assert {r["rejected"] for r in rows} <= {"0", "1"}
        report = json.loads((tmp_path / "job.report.json").read_text())
        for key in ("tau", "fdp_hat", "fdp_trace", "wall_time_s", "seed"):
            assert key in report
        assert report["fdp_hat"] <= 0.2
        assert len(report["fdp_trace"]) == report["tau"]

    def test_deterministic(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_dataset(data, seed=3)
        outs = []
        for name in ("a", "b"):
            res = runner.invoke(main, ["run", "--data", str(data),
                                       "--alpha", "0.1",
                                       "--out", str(tmp_path / name)])
            assert res.exit_code == 0
            outs.append((tmp_path / f"{name}.rejections.csv").read_text())
        assert outs[0] == outs[1]

    def test_missing_file_exits_2(self, runner, tmp_path):
        res = runner.invoke(main, ["run", "--data", str(tmp_path / "no.csv"),
                                   "--alpha", "0.1",
                                   "--out", str(tmp_path / "x")])
        assert res.exit_code == 2
        assert "error:" in res.output

    def test_bad_accum_json_exits_2(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_dataset(data)
        res = runner.invoke(main, ["run", "--data", str(data),
                                   "--alpha", "0.1",
                                   "--accum", '{"kind": "nope"}',
                                   "--out", str(tmp_path / "x")])
        assert res.exit_code == 2

    def test_tree_needs_structure(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        write_dataset(data)
        res = runner.invoke(main, ["run", "--data", str(data),
                                   "--alpha", "0.1", "--constraint", "tree",
                                   "--out", str(tmp_path / "x")])
        assert res.exit_code == 2
        assert "structure" in res.output

    def test_tree_structured_run(self, runner, tmp_path):
        rng = np.random.default_rng(1)
        n = 31
        parent = [-1] + [(i - 1) // 2 for i in range(1, n)]
        p = rng.uniform(size=n)
        p[:15] = rng.uniform(0, 1e-4, 15)  # top of the tree is signal
        X = np.arange(n, dtype=float).reshape(-1, 1)
        data = tmp_path / "data.csv"
        engine.save_dataset_csv(data, X, p)
        struct = tmp_path / "tree.csv"
        with open(struct, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["child", "parent"])
            for c, q in enumerate(parent):
                w.writerow([c, q])
        res = runner.invoke(main, ["run", "--data", str(data),
                                   "--structure", str(struct),
                                   "--constraint", "tree", "--alpha", "0.2",
                                   "--out", str(tmp_path / "t")])
        assert res.exit_code == 0, res.output
        report = json.loads((tmp_path / "t.report.json").read_text())
        assert report["n_rejected"] >= 7


class TestSimulate:
    def test_small_run(self, runner, tmp_path):
        cfg = {"scenario": "unstructured", "alpha_grid": [0.2],
               "replicates": 3, "seed": 1}
        out = tmp_path / "res.csv"
        res = runner.invoke(main, ["simulate", "--config", json.dumps(cfg),
                                   "--methods", "star_canonical,bh",
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# seed=")
        rows = list(csv.DictReader(lines[1:]))
        assert {r["method"] for r in rows} == {"star_canonical", "bh"}
        for r in rows:
            assert 0.0 <= float(r["fdr"]) <= 1.0
            assert 0.0 <= float(r["power"]) <= 1.0

    def test_bad_scenario_exits_2(self, runner, tmp_path):
        cfg = {"scenario": "nonsense", "replicates": 1}
        res = runner.invoke(main, ["simulate", "--config", json.dumps(cfg),
                                   "--out", str(tmp_path / "r.csv")])
        assert res.exit_code == 2

    def test_figures_pivot(self, runner, tmp_path):
        cfg = {"scenario": "unstructured", "alpha_grid": [0.1, 0.2],
               "replicates": 2, "seed": 2}
        res_csv = tmp_path / "res.csv"
        assert runner.invoke(main, ["simulate", "--config", json.dumps(cfg),
                                    "--methods", "bh,storey_bh",
                                    "--out", str(res_csv)]).exit_code == 0
        out_dir = tmp_path / "figs"
        res = runner.invoke(main, ["figures", "--results", str(res_csv),
                                   "--out", str(out_dir)])
        assert res.exit_code == 0, res.output
        for metric in ("fdr", "power"):
            lines = (out_dir / f"{metric}.csv").read_text().splitlines()
            assert lines[0].startswith("# seed=")
            rows = list(csv.DictReader(lines[1:]))
            assert [float(r["alpha"]) for r in rows] == [0.1, 0.2]
            assert "bh" in rows[0] and "storey_bh_se" in rows[0]

    def test_figures_empty_exits_2(self, runner, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        res = runner.invoke(main, ["figures", "--results", str(empty),
                                   "--out", str(tmp_path / "f")])
        assert res.exit_code == 2


class TestDenoise:
    def test_end_to_end(self, runner, tmp_path):
        # 16-bit graymaps: 8-bit quantization makes exact-zero coefficients
        # common, and their two-sided p = 1 masks to g = 0, which stalls the
        # peel
        rng = np.random.default_rng(0)
        img = np.full((64, 64), 60.0)
        img[19:51, 13:45] = 190.0
        noisy = img + rng.normal(scale=25.0, size=img.shape)
        wv.write_pgm(tmp_path / "clean.pgm", img * 256, maxval=65535)
        wv.write_pgm(tmp_path / "noisy.pgm", noisy * 256, maxval=65535)
        res = runner.invoke(main, [
            "denoise", "--image", str(tmp_path / "noisy.pgm"),
            "--clean", str(tmp_path / "clean.pgm"),
            "--alpha", "0.1", "--two-sided",
            "--out", str(tmp_path / "d")])
        assert res.exit_code == 0, res.output
        metrics = json.loads((tmp_path / "d.metrics.json").read_text())
        assert metrics["cr"] >= 1.0
        assert metrics["snr_recon"] > metrics["snr_noisy"]
        recon = wv.read_pgm(tmp_path / "d.recon.pgm")
        assert recon.shape == (64, 64)

    def test_bad_image_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_text("not a pgm")
        res = runner.invoke(main, ["denoise", "--image", str(bad),
                                   "--out", str(tmp_path / "d")])
        assert res.exit_code == 2


class TestCliServiceAgreement:
    def test_same_rejections(self, runner, tmp_path):
        data = tmp_path / "data.csv"
        X, p = write_dataset(data, seed=9)
        out = tmp_path / "job"
        assert runner.invoke(main, ["run", "--data", str(data),
                                    "--alpha", "0.2",
                                    "--out", str(out)]).exit_code == 0
        lines = (tmp_path / "job.rejections.csv").read_text().splitlines()
        cli_rej = sorted(int(r["id"]) for r in csv.DictReader(lines[1:])
                         if r["rejected"] == "1")

        client = TestClient(create_app())
        tok = client.post("/sessions", json={
            "v": 1,
            "covariates": X.tolist(),
            "p": list(map(float, p)),
            "spec": {"kind": "seqstep", "pstar": 0.5},
            "alpha": 0.2,
        }).json()["token"]
        client.post(f"/sessions/{tok}/autostep", json={"v": 1, "k": 10 ** 6})
        svc_rej = sorted(client.get(f"/sessions/{tok}/result"
                                    ).json()["rejection"])
        assert cli_rej == svc_rej
