"""Plain SVG figures and a text table from a run directory's ``queries.csv``."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .hierarchy import MODELS, QueryRecord, summarize
from .io import read_queries_csv, read_summary

__all__ = ["ReportError", "timings_svg", "errors_svg", "table_text", "cross_check", "write_report"]

COLORS = {"ML": "#1f77b4", "RB": "#ff7f0e", "FOM": "#d62728"}
WIDTH, HEIGHT = 720, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50


class ReportError(RuntimeError):
    pass


class _LogAxes:
    """Query index on x, log10 of a positive quantity on y."""

    def __init__(self, count: int, values):
        positive = [v for v in values if v > 0 and math.isfinite(v)]
        lo = min(positive) if positive else 1e-16
        hi = max(positive) if positive else 1.0
        self.floor = lo
        self.lo = math.floor(math.log10(lo))
        self.hi = max(math.ceil(math.log10(hi)), self.lo + 1)
        self.count = max(count, 1)

    def x(self, index: int) -> float:
        span = WIDTH - LEFT - RIGHT
        return LEFT + span * (index + 0.5) / self.count

    def y(self, value: float) -> float:
        v = math.log10(max(value, self.floor))
        span = HEIGHT - TOP - BOTTOM
        return TOP + span * (self.hi - v) / (self.hi - self.lo)

    def frame(self, title: str, ylabel: str) -> list[str]:
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<title>{escape(title)}</title>',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<line x1="{LEFT}" y1="{HEIGHT - BOTTOM}" x2="{WIDTH - RIGHT}" y2="{HEIGHT - BOTTOM}" stroke="black"/>',
            f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{HEIGHT - BOTTOM}" stroke="black"/>',
            f'<text x="{(LEFT + WIDTH - RIGHT) / 2}" y="{HEIGHT - 12}" text-anchor="middle">query</text>',
            f'<text x="14" y="{(TOP + HEIGHT - BOTTOM) / 2}" text-anchor="middle" '
            f'transform="rotate(-90 14 {(TOP + HEIGHT - BOTTOM) / 2})">{escape(ylabel)}</text>',
        ]
        step = max(1, (self.hi - self.lo) // 8)
        for e in range(self.lo, self.hi + 1, step):
            y = self.y(10.0**e)
            out.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
        return out


def _legend(entries) -> list[str]:
    out = []
    for k, (label, color) in enumerate(entries):
        x = LEFT + 10 + 90 * k
        out.append(f'<circle cx="{x}" cy="{TOP - 14}" r="4" fill="{color}"/>')
        out.append(f'<text x="{x + 8}" y="{TOP - 10}">{escape(label)}</text>')
    return out


def _stage_time(r: QueryRecord) -> float:
    return r.t_ml + r.t_rb + r.t_fom + r.t_train


def timings_svg(records: list[QueryRecord]) -> str:
    """Wall time of every query, coloured by the model that served it."""
    times = [_stage_time(r) for r in records]
    axes = _LogAxes(len(records), times)
    out = axes.frame("per-query wall time", "time [s]")
    out += _legend([(m, COLORS[m]) for m in MODELS])
    for r, t in zip(records, times):
        out.append(
            f'<circle class="query {r.model_used}" data-index="{r.index}" cx="{axes.x(r.index):.2f}" '
            f'cy="{axes.y(t):.2f}" r="2.5" fill="{COLORS[r.model_used]}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def errors_svg(records: list[QueryRecord], tolerance: float) -> str:
    """Estimated ML and RB errors per query with the tolerance line."""
    etas = [r.eta_ml for r in records] + [r.eta_rb for r in records if r.eta_rb is not None] + [tolerance]
    axes = _LogAxes(len(records), etas)
    out = axes.frame("estimated errors", "error estimate")
    out += _legend([("ML-ROM", COLORS["ML"]), ("RB-ROM", COLORS["RB"])])
    y = axes.y(tolerance)
    out.append(f'<line class="epsilon" data-value="{tolerance!r}" x1="{LEFT}" y1="{y:.2f}" '
               f'x2="{WIDTH - RIGHT}" y2="{y:.2f}" stroke="black" stroke-dasharray="6 3"/>')
    out.append(f'<text x="{WIDTH - RIGHT - 4}" y="{y - 4:.2f}" text-anchor="end">tolerance {tolerance:g}</text>')
    for r in records:
        out.append(f'<circle class="eta-ml" data-index="{r.index}" cx="{axes.x(r.index):.2f}" '
                   f'cy="{axes.y(r.eta_ml):.2f}" r="2" fill="{COLORS["ML"]}"/>')
    for r in records:
        if r.eta_rb is None:
            continue
        x, yy = axes.x(r.index), axes.y(r.eta_rb)
        out.append(f'<rect class="eta-rb" data-index="{r.index}" x="{x - 3:.2f}" y="{yy - 3:.2f}" '
                   f'width="6" height="6" fill="none" stroke="{COLORS["RB"]}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def table_text(records: list[QueryRecord]) -> str:
    stats = summarize(records)
    lines = [f"{'model':<6}{'served':>8}{'solves':>8}{'estimates':>11}{'total [s]':>12}{'mean/solve [s]':>16}"]
    for m in MODELS:
        lines.append(f"{m:<6}{stats.served[m]:>8}{stats.solves[m]:>8}{stats.estimates[m]:>11}"
                     f"{stats.total_time[m]:>12.4g}{stats.mean_time_per_solve[m]:>16.4g}")
    lines.append(f"queries: {stats.queries}   final basis size: {stats.final_basis_size}   "
                 f"training time: {stats.training_time:.4g} s")
    return "\n".join(lines) + "\n"


def cross_check(records: list[QueryRecord], summary: dict) -> list[str]:
    """Differences between ``summary.json`` counts and counts rebuilt from the CSV."""
    rebuilt = summarize(records).to_dict()
    problems = []
    for key in ("queries", "served", "solves", "estimates", "final_basis_size"):
        if key in summary and summary[key] != rebuilt[key]:
            problems.append(f"{key}: summary.json has {summary[key]}, queries.csv gives {rebuilt[key]}")
    return problems


def write_report(run_dir, tolerance: float | None = None) -> dict:
    """Write ``timings.svg``, ``errors.svg`` and ``table.txt`` into ``run_dir``.

    The tolerance defaults to the one stored in ``summary.json`` (1e-4 if
    absent). Raises :class:`ReportError` for a missing or malformed log or
    when the summary disagrees with the log.
    """
    run_dir = Path(run_dir)
    csv_path = run_dir / "queries.csv"
    if not csv_path.is_file():
        raise ReportError(f"{csv_path} not found")
    try:
        records = read_queries_csv(csv_path)
    except ValueError as exc:
        raise ReportError(str(exc)) from exc
    summary = read_summary(run_dir / "summary.json") if (run_dir / "summary.json").is_file() else {}
    mismatches = cross_check(records, summary)
    if mismatches:
        raise ReportError("summary.json inconsistent with queries.csv: " + "; ".join(mismatches))
    if tolerance is None:
        tolerance = float(summary.get("tolerance", 1e-4))
    paths = {
        "timings": run_dir / "timings.svg",
        "errors": run_dir / "errors.svg",
        "table": run_dir / "table.txt",
    }
    paths["timings"].write_text(timings_svg(records))
    paths["errors"].write_text(errors_svg(records, tolerance))
    paths["table"].write_text(table_text(records))
    return paths
