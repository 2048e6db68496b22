"""On-disk formats: per-query CSV log, run summary and hierarchy checkpoints.

A checkpoint is a directory holding

* ``basis.txt``: the raw snapshots (see :func:`rbrom.write_basis`),
* ``surrogates.json``: one Newton-form kernel model per coefficient,
* ``state.json``: snapshot parameters, training data, the pending-sample
  counter and the query records so far.

Floats are written in shortest round-trip form so that re-runs can be
compared byte for byte.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

from .hierarchy import HierarchyState, QueryRecord, SummaryStats
from .mlrom import CoefficientSurrogate, CoefficientTrainingSet
from .rbrom import read_basis, write_basis

__all__ = [
    "TIMING_COLUMNS",
    "query_columns",
    "write_queries_csv",
    "read_queries_csv",
    "write_summary",
    "read_summary",
    "save_checkpoint",
    "load_checkpoint",
]

TIMING_COLUMNS = ("t_ml_s", "t_rb_s", "t_fom_s", "t_train_s")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def query_columns(p: int) -> list[str]:
    return (["index"] + [f"mu_{j + 1}" for j in range(p)]
            + ["model_used", "eta_ml", "eta_rb", "basis_size_after", "gramian_applications"]
            + list(TIMING_COLUMNS))


def write_queries_csv(path, records: list[QueryRecord]) -> None:
    p = len(records[0].parameter) if records else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(query_columns(p))
        for r in records:
            writer.writerow(
                [r.index, *(_fmt(float(v)) for v in r.parameter), r.model_used, _fmt(float(r.eta_ml)),
                 _fmt(None if r.eta_rb is None else float(r.eta_rb)), r.basis_size_after,
                 r.gramian_applications, *(_fmt(float(t)) for t in (r.t_ml, r.t_rb, r.t_fom, r.t_train))]
            )


def read_queries_csv(path) -> list[QueryRecord]:
    """Parse a query log back into records; raises ``ValueError`` on malformed input."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    p = sum(h.startswith("mu_") for h in header)
    if header != query_columns(p):
        raise ValueError(f"{path}: unexpected header {header}")
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        f = dict(zip(header, row))
        try:
            if f["model_used"] not in ("ML", "RB", "FOM"):
                raise ValueError(f"unknown model {f['model_used']!r}")
            records.append(QueryRecord(
                index=int(f["index"]),
                parameter=tuple(float(f[f"mu_{j + 1}"]) for j in range(p)),
                model_used=f["model_used"],
                eta_ml=float(f["eta_ml"]),
                eta_rb=float(f["eta_rb"]) if f["eta_rb"] else None,
                basis_size_after=int(f["basis_size_after"]),
                gramian_applications=int(f["gramian_applications"]),
                t_ml=float(f["t_ml_s"]),
                t_rb=float(f["t_rb_s"]),
                t_fom=float(f["t_fom_s"]),
                t_train=float(f["t_train_s"]),
            ))
        except ValueError as exc:
            raise ValueError(f"{path}:{line}: {exc}") from exc
    return records


def write_summary(path, stats: SummaryStats, tolerance: float | None = None, extra: dict | None = None) -> None:
    out = stats.to_dict()
    if tolerance is not None:
        out["tolerance"] = tolerance
    out.update(extra or {})
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")


def read_summary(path) -> dict:
    return json.loads(Path(path).read_text())


def _record_to_json(r: QueryRecord) -> dict:
    d = asdict(r)
    d["parameter"] = list(r.parameter)
    d["eta_ml"] = float(r.eta_ml)
    return d


def save_checkpoint(directory, state: HierarchyState) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_basis(directory / "basis.txt", state.basis)
    surrogates = [s.to_dict() for s in state.surrogates]
    (directory / "surrogates.json").write_text(json.dumps(surrogates) + "\n")
    data = [[[list(k), v, size] for k, (v, size) in d.samples.items()] for d in state.coefficient_data]
    payload = {
        "basis_parameters": [None if q is None else list(q) for q in state.basis.parameters],
        "coefficient_data": data,
        "pending_samples": state.pending_samples,
        "records": [_record_to_json(r) for r in state.records],
    }
    (directory / "state.json").write_text(json.dumps(payload) + "\n")
    return directory


def load_checkpoint(directory) -> HierarchyState:
    directory = Path(directory)
    for name in ("basis.txt", "surrogates.json", "state.json"):
        if not (directory / name).is_file():
            raise FileNotFoundError(f"checkpoint {directory} lacks {name}")
    payload = json.loads((directory / "state.json").read_text())
    params = tuple(None if q is None else tuple(q) for q in payload["basis_parameters"])
    basis = read_basis(directory / "basis.txt", params)
    surrogates = [CoefficientSurrogate.from_dict(d) for d in json.loads((directory / "surrogates.json").read_text())]
    coefficient_data = []
    for samples in payload["coefficient_data"]:
        data = CoefficientTrainingSet()
        for mu, value, size in samples:
            data.add(mu, value, size)
        coefficient_data.append(data)
    records = []
    for d in payload["records"]:
        d = dict(d)
        d["parameter"] = tuple(d["parameter"])
        records.append(QueryRecord(**d))
    state = HierarchyState(basis, surrogates, coefficient_data, int(payload["pending_samples"]), records)
    state.check()
    return state
