"""Heat-equation experiment with post-hoc certification of sampled queries.

    python scripts/heat_experiment.py configs/desk.toml
    python scripts/heat_experiment.py configs/full.toml --certify 20

Writes queries.csv, summary.json, the figures and table into the config's
output directory, then re-solves the FOM at tolerance 1e-12 for randomly
sampled queries and compares with the returned final-time adjoints.
"""
import argparse
import json
import logging
import time

import numpy as np

from adaptive_lq import AdaptiveModelHierarchy, parameter_grid, solve_fom, summarize
from adaptive_lq.config import load_run_config
from adaptive_lq.io import save_checkpoint, write_queries_csv, write_summary
from adaptive_lq.report import table_text, write_report


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("config")
    parser.add_argument("--certify", type=int, default=20, help="number of sampled queries to re-solve")
    parser.add_argument("--certify-seed", type=int, default=7)
    parser.add_argument("--progress", type=int, default=100)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = load_run_config(args.config)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    build = config.problem_builder()
    hierarchy = AdaptiveModelHierarchy(build, config.hierarchy, config.bounds)
    grid = parameter_grid(config.problem, config.grid_counts, config.seed)
    picks = set(np.random.default_rng(args.certify_seed).choice(len(grid), args.certify, replace=False).tolist())

    returned = {}
    tic = time.perf_counter()
    for k, mu in enumerate(grid):
        result = hierarchy.query(mu)
        if k in picks:
            returned[k] = result.final_adjoint
        if (k + 1) % args.progress == 0:
            s = summarize(hierarchy.records)
            logging.info("%d/%d served %s basis %d", k + 1, len(grid), s.served, s.final_basis_size)
    seconds = time.perf_counter() - tic

    stats = summarize(hierarchy.records)
    write_queries_csv(out / "queries.csv", hierarchy.records)
    write_summary(out / "summary.json", stats, config.hierarchy.tolerance,
                  {"family": config.family, "grid_counts": list(config.grid_counts), "seed": config.seed})
    if config.checkpoint is not None:
        save_checkpoint(config.checkpoint, hierarchy.state)
    write_report(out)

    errors = {}
    for k, phi in sorted(returned.items()):
        ref = solve_fom(build(grid[k]), 1e-12).final_adjoint.value
        errors[k] = float(np.linalg.norm(ref - phi))
    eps = config.hierarchy.tolerance
    late = [r.index for r in hierarchy.records[len(grid) // 2:] if r.model_used == "FOM"]
    result = {
        "queries": stats.queries,
        "served": stats.served,
        "ml_share": stats.served["ML"] / stats.queries,
        "fom_in_second_half": len(late),
        "run_seconds": seconds,
        "certified_errors": errors,
        "max_certified_error": max(errors.values()),
        "certified": max(errors.values()) <= eps + 1e-9,
    }
    (out / "certification.json").write_text(json.dumps(result, indent=2) + "\n")
    print(table_text(hierarchy.records), end="")
    print(f"ML share {result['ml_share']:.2%}, FOM calls in second half {len(late)}, "
          f"max certified error {result['max_certified_error']:.2e} (tolerance {eps:g}), {seconds:.0f}s")


if __name__ == "__main__":
    main()
