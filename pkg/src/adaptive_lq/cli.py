"""Command line driver: ``run``, ``solve``, ``validate`` and ``report``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, load_run_config
from .dynamics import evaluate_cost
from .estimator import residual_from_state
from .fom import KrylovError, solve_fom
from .heat1d import parameter_grid
from .hierarchy import AdaptiveModelHierarchy, HierarchyState, summarize
from .io import load_checkpoint, save_checkpoint, write_queries_csv, write_summary
from .mlrom import solve_ml
from .rbrom import solve_rb
from .report import ReportError, table_text, write_report
from .validate import run_suite

log = logging.getLogger("adaptive_lq")


def _load_state(path: Path | None) -> HierarchyState | None:
    if path is None or not (path / "state.json").is_file():
        return None
    return load_checkpoint(path)


def cmd_run(args) -> int:
    config = load_run_config(args.config)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    state = _load_state(config.checkpoint)
    hierarchy = AdaptiveModelHierarchy(config.problem_builder(), config.hierarchy, config.bounds, state)
    grid = parameter_grid(config.problem, config.grid_counts, config.seed)
    start = len(hierarchy.records)
    if start:
        log.info("resuming from %s after %d queries", config.checkpoint, start)
    tic = time.perf_counter()
    try:
        for k, mu in enumerate(grid[start:], start=start):
            hierarchy.query(mu)
            if (k + 1) % args.progress == 0:
                s = summarize(hierarchy.records)
                log.info("%d/%d queries, served %s, basis %d, %.1fs", k + 1, len(grid), s.served,
                         s.final_basis_size, time.perf_counter() - tic)
    finally:
        records = hierarchy.records
        write_queries_csv(out / "queries.csv", records)
        write_summary(out / "summary.json", summarize(records), config.hierarchy.tolerance,
                      {"family": config.family, "grid_counts": list(config.grid_counts), "seed": config.seed})
        if config.checkpoint is not None and hierarchy.state is not None:
            save_checkpoint(config.checkpoint, hierarchy.state)
    print(table_text(records), end="")
    print(f"wrote {out / 'queries.csv'} and {out / 'summary.json'}")
    return 0


def _parse_mu(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"cannot parse --mu {text!r}") from exc


def cmd_solve(args) -> int:
    config = load_run_config(args.config)
    mu = _parse_mu(args.mu)
    problem = config.problem_builder()(mu)
    if args.model == "fom":
        sol = solve_fom(problem, config.hierarchy.fom_tolerance)
        final, control, state = sol.final_adjoint.value, sol.control, sol.state
        basis_size = 0
    else:
        checkpoint = Path(args.checkpoint) if args.checkpoint else config.checkpoint
        hstate = _load_state(checkpoint) or HierarchyState.fresh(problem.n)
        if hstate.basis.n != problem.n:
            raise ConfigError(f"checkpoint basis has dimension {hstate.basis.n}, problem has {problem.n}")
        if args.model == "rb":
            sol = solve_rb(problem, hstate.basis)
        else:
            sol = solve_ml(problem, hstate.basis, hstate.surrogates, mu)
        final, control, state = sol.final_adjoint, sol.control, sol.state
        basis_size = len(hstate.basis)
    eta = residual_from_state(problem, final, state[-1])
    cost = evaluate_cost(problem, control, state[-1])
    print(f"model: {args.model}")
    print(f"eta: {eta!r}")
    print(f"cost: {cost!r}")
    print(f"basis_size: {basis_size}")
    if problem.n <= 8:
        print("final_adjoint: " + " ".join(repr(float(v)) for v in final))
    else:
        print(f"final_adjoint_norm: {float(np.linalg.norm(final))!r}")
    path = Path(args.output) if args.output else config.output_dir / f"control_{args.model}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"u_{j + 1}" for j in range(control.shape[1])])
        for t, u in zip(problem.grid.nodes, control):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in u])
    print(f"control: {path}")
    return 0


def cmd_validate(args) -> int:
    checks = run_suite(args.scale, lambda c: print(c.line(), flush=True))
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} properties passed")
    return 0 if failed == 0 else 1


def cmd_report(args) -> int:
    paths = write_report(args.run_dir, args.tolerance)
    print(paths["table"].read_text(), end="")
    for key in ("timings", "errors", "table"):
        print(f"wrote {paths[key]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-lq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="query the adaptive hierarchy over a shuffled parameter grid")
    p.add_argument("config", type=Path)
    p.add_argument("--progress", type=int, default=50, help="log every N queries (with -v)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve", help="solve one parameter with a single model")
    p.add_argument("config", type=Path)
    p.add_argument("--mu", required=True, help="comma separated parameter, e.g. 1.5,1.0")
    p.add_argument("--model", required=True, choices=("fom", "rb", "ml"))
    p.add_argument("--checkpoint", help="checkpoint directory with basis and surrogates")
    p.add_argument("--output", help="control CSV path (default: <output_dir>/control_<model>.csv)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--scale", choices=("quick", "full"), default="quick")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="figures and table from a run directory")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--tolerance", type=float, help="tolerance line (default: from summary.json)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ReportError, KrylovError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
