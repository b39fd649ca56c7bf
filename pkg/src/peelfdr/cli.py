"""Command line front end: batch runs, simulations, denoising, serving."""

from __future__ import annotations

import csv
import json
import os
import sys
import time

import click
import numpy as np

from peelfdr import accum, constraints as cons, engine, scores
from peelfdr.evalab import experiment as ex
from peelfdr.evalab import generate as gen
from peelfdr.evalab import wavelet as wv


def _load_json_arg(value: str) -> dict:
    """Accept an inline JSON object or a path to a JSON file."""
    value = value.strip()
    if value.startswith("{"):
        return json.loads(value)
    with open(value) as fh:
        return json.load(fh)


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


@click.group()
def main():
    """Interactive FDR control by iterative peeling of masked p-values."""


@main.command()
@click.option("--data", "data_path", required=True,
              help="dataset CSV with header id,x1..xd,p")
@click.option("--structure", "structure_path", default=None,
              help="structure CSV (tree: child,parent; dag: child,parent per edge)")
@click.option("--constraint", "constraint_kind", default="none",
              type=click.Choice(["none", "convex2d", "axisbox", "tree",
                                 "dag_strong", "dag_weak"]))
@click.option("--accum", "accum_json", default='{"kind": "seqstep", "pstar": 0.5}',
              help="accumulation spec JSON (inline or file path)")
@click.option("--score", "score_json", default='{"kind": "canonical"}',
              help="update rule JSON (inline or file path)")
@click.option("--alpha", required=True, type=float)
@click.option("--delta", default=0.02, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_prefix", required=True,
              help="output prefix; writes <out>.rejections.csv and <out>.report.json")
def run(data_path, structure_path, constraint_kind, accum_json, score_json,
        alpha, delta, seed, out_prefix):
    """Run the automated procedure on a dataset and write the results."""
    t0 = time.perf_counter()
    try:
        X, p = engine.load_dataset_csv(data_path)
        spec = accum.accumulator_from_json(_load_json_arg(accum_json))
        rule = scores.make_rule(_load_json_arg(score_json))
        if constraint_kind == "none":
            constraint = cons.constraint_none()
        elif constraint_kind == "convex2d":
            constraint = cons.convex2d(X[:, :2], delta=delta)
        elif constraint_kind == "axisbox":
            constraint = cons.axisbox(X, delta=delta)
        elif constraint_kind == "tree":
            if not structure_path:
                raise ValueError("tree constraint needs --structure")
            constraint = cons.load_tree_csv(structure_path)
        else:
            if not structure_path:
                raise ValueError("DAG constraint needs --structure")
            mode = "strong" if constraint_kind == "dag_strong" else "weak"
            constraint = cons.load_dag_csv(structure_path, mode=mode)
        sess = engine.create_session((X, p), spec, constraint=constraint,
                                     alpha=alpha, seed=seed)
        engine.run_auto(sess, rule)
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        _fail(str(exc))

    rejected = set(int(i) for i in sess.rejection)
    with open(f"{out_prefix}.rejections.csv", "w", newline="") as fh:
        fh.write(f"# seed={seed}\n")
        w = csv.writer(fh)
        w.writerow(["id", "p", "rejected"])
        for i in range(sess.n):
            w.writerow([i, repr(float(sess.p[i])), int(i in rejected)])
    report = {
        "v": 1,
        "seed": seed,
        "alpha": alpha,
        "tau": sess.step,
        "n": sess.n,
        "n_rejected": len(rejected),
        "fdp_hat": engine._current_fdp(sess),
        "fdp_trace": [rec["fdp_hat"] for rec in sess.history],
        "wall_time_s": time.perf_counter() - t0,
    }
    with open(f"{out_prefix}.report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    click.echo(f"seed={seed} rejected {len(rejected)} of {sess.n} "
               f"in {sess.step} steps")


@main.command()
@click.option("--config", "config_json", required=True,
              help="experiment config JSON (inline or file path)")
@click.option("--methods", default="star_canonical,bh,storey_bh",
              show_default=True)
@click.option("--out", "out_path", required=True, help="results CSV path")
def simulate(config_json, methods, out_path):
    """Run a replicated simulation and write the FDR/power table."""
    try:
        obj = _load_json_arg(config_json)
        config = gen.ExperimentConfig(**obj)
        rows = ex.run_experiment(config, methods=tuple(methods.split(",")))
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        _fail(str(exc))
    ex.write_results_csv(out_path, rows, seed=config.seed)
    click.echo(f"seed={config.seed} wrote {len(rows)} rows to {out_path}")


@main.command()
@click.option("--image", "image_path", required=True, help="input PGM image")
@click.option("--alpha", default=0.1, type=float, show_default=True)
@click.option("--rule", default="canonical", show_default=True)
@click.option("--two-sided", is_flag=True, default=False)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--clean", "clean_path", default=None,
              help="optional clean reference PGM for SNR reporting")
@click.option("--out", "out_prefix", required=True)
def denoise(image_path, alpha, rule, two_sided, seed, clean_path, out_prefix):
    """Denoise an image by structured coefficient selection."""
    try:
        img = wv.read_pgm(image_path)
        result = wv.denoise_image(img, alpha=alpha, rule=rule,
                                  two_sided=two_sided, seed=seed)
    except (ValueError, OSError) as exc:
        _fail(str(exc))
    maxval = 255 if float(np.max(img)) <= 255 else 65535
    wv.write_pgm(f"{out_prefix}.recon.pgm", result["recon"], maxval=maxval)
    metrics = {
        "v": 1,
        "seed": seed,
        "alpha": alpha,
        "selected": result["selected"],
        "cr": result["cr"],
        "hard_cr": result["hard_cr"],
        "soft_cr": result["soft_cr"],
    }
    if clean_path:
        clean = wv.read_pgm(clean_path)
        metrics["snr_noisy"] = wv.snr(clean, img)
        metrics["snr_recon"] = wv.snr(clean, result["recon"])
        metrics["snr_hard"] = wv.snr(clean, result["hard_recon"])
        metrics["snr_soft"] = wv.snr(clean, result["soft_recon"])
    with open(f"{out_prefix}.metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2)
    click.echo(f"seed={seed} selected {result['selected']} coefficients "
               f"(CR {result['cr']:.2f})")


@main.command()
@click.option("--port", default=8000, type=int, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--snapshot-dir", default=None)
def serve(port, host, snapshot_dir):
    """Start the HTTP service."""
    import uvicorn

    from peelfdr.service import create_app

    uvicorn.run(create_app(snapshot_dir), host=host, port=port)


@main.command()
@click.option("--results", "results_path", required=True, help="results CSV")
@click.option("--out", "out_dir", required=True, help="output directory")
def figures(results_path, out_dir):
    """Pivot a results CSV into per-metric tidy tables."""
    try:
        with open(results_path, newline="") as fh:
            header = fh.readline()
            seed = header.strip().lstrip("#").strip() if \
                header.startswith("#") else None
            if not header.startswith("#"):
                fh.seek(0)
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError("results CSV is empty")
    except (OSError, ValueError) as exc:
        _fail(str(exc))
    os.makedirs(out_dir, exist_ok=True)
    methods = sorted({r["method"] for r in rows})
    alphas = sorted({float(r["alpha"]) for r in rows})
    for metric in ("fdr", "power"):
        path = os.path.join(out_dir, f"{metric}.csv")
        with open(path, "w", newline="") as fh:
            if seed:
                fh.write(f"# {seed}\n")
            w = csv.writer(fh)
            w.writerow(["alpha"] + [m for m in methods] +
                       [f"{m}_se" for m in methods])

            cell = {(r["method"], float(r["alpha"])): r for r in rows}
            for a in alphas:
                line = [a]
                line += [cell[(m, a)][metric] for m in methods]
                line += [cell[(m, a)][f"{metric}_se"] for m in methods]
                w.writerow(line)
    click.echo(f"wrote fdr.csv and power.csv to {out_dir}")


if __name__ == "__main__":
    main()
