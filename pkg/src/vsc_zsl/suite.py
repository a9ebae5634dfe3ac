"""Batch runner: train and score a list of (dataset, method, beta, seed) rows."""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from vsc_zsl.dataset import DataError, load_dataset
from vsc_zsl.evaluation import evaluate_conventional, evaluate_generalized
from vsc_zsl.train import TrainConfig, train_dataset

REQUIRED = ("dataset", "method", "beta", "seed")
_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_CASTS = {"int": int, "float": float, "str": str, "bool": lambda s: s.strip().lower() in ("1", "true", "yes")}


def _cast(name: str, raw: str):
    kind = _CONFIG_FIELDS[name]
    if "None" in kind:
        return None if raw.strip() == "" else int(raw)
    return _CASTS[kind](raw)


def read_suite(path) -> list[dict]:
    """Parse a suite CSV (header row required).

    Columns ``dataset,method,beta,seed`` are mandatory; any other column
    named after a :class:`TrainConfig` field overrides that field, and an
    optional ``mode`` column picks ``conventional`` or ``generalized``
    scoring per row. Relative dataset paths resolve against the suite file.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty suite file")
        missing = [c for c in REQUIRED if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        unknown = [c for c in reader.fieldnames if c not in REQUIRED and c != "mode" and c not in _CONFIG_FIELDS]
        if unknown:
            raise DataError(f"{path}: unknown columns {unknown}")
        rows = []
        for row in reader:
            data = Path(row["dataset"])
            if not data.is_absolute():
                data = path.parent / data
            rows.append({**row, "dataset_path": str(data)})
    return rows


def run_row(row: dict, default_mode: str = "conventional") -> dict:
    """Train and score one suite row; failures are reported, not raised."""
    started = time.perf_counter()
    out = {"dataset": row["dataset"], "method": row["method"], "beta": row["beta"], "seed": row["seed"],
           "status": "ok", "acc": None, "acc_u": None, "acc_s": None, "H": None, "message": ""}
    mode = (row.get("mode") or default_mode).strip()
    try:
        overrides = {k: _cast(k, v) for k, v in row.items()
                     if k in _CONFIG_FIELDS and k not in ("method", "beta", "seed") and v not in (None, "")}
        config = TrainConfig(method=row["method"].strip(), beta=float(row["beta"]), seed=int(row["seed"]),
                             **overrides)
        data = load_dataset(row["dataset_path"])
        net, _ = train_dataset(config, data)
        out["acc"] = evaluate_conventional(net, data)
        if mode == "generalized":
            res = evaluate_generalized(net, data)
            out.update(acc_u=res.acc_u, acc_s=res.acc_s, H=res.H)
        elif mode != "conventional":
            raise ValueError(f"unknown mode {mode!r}")
    except Exception as exc:  # noqa: BLE001 - a failed row must not stop the suite
        out["status"] = "error"
        out["message"] = f"{type(exc).__name__}: {exc}"
    out["runtime"] = time.perf_counter() - started
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_summary(results: list[dict], generalized: bool = False, timings: bool = False) -> str:
    header = ["dataset", "method", "beta", "seed", "status", "acc"]
    if generalized:
        header += ["acc_u", "acc_s", "H"]
    if timings:
        header.append("runtime")
    header.append("message")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for r in results:
        writer.writerow([_fmt(r[h]) for h in header])
    return buf.getvalue()


def run_experiment_suite(suite_path, mode: str = "conventional", jobs: int = 1, timings: bool = False) -> str:
    """Run every row of a suite file and return the summary CSV text.

    Rows keep the suite file's order whatever ``jobs`` is. Runtimes appear
    only with ``timings=True`` so that the default output is reproducible.
    """
    rows = read_suite(suite_path)
    modes = [mode] * len(rows)
    if jobs > 1 and len(rows) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_row, rows, modes))
    else:
        results = [run_row(r, m) for r, m in zip(rows, modes)]
    generalized = mode == "generalized" or any((r.get("mode") or "").strip() == "generalized" for r in rows)
    return format_summary(results, generalized=generalized, timings=timings)
