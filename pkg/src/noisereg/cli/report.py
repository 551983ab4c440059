"""Run reports as JSON documents or long-format CSV.

A report is a plain dict::

    {"schema_version": 1, "artifact_version": ..., "subcommand": ...,
     "seed": ..., "config": {...}, "runs": [run, ...]}

and every run carries ``run_id`` and ``seed`` next to its ``losses``
(per-epoch mean train loss), ``gaps`` and ``verifications``. The CSV
form has one row per number, columns ``run_id, seed, metric, step, value``.
"""

from __future__ import annotations

import json
import sys

CSV_COLUMNS = ("run_id", "seed", "metric", "step", "value")


def empty_report() -> dict:
    return {"runs": []}


def _num(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    return format(float(v), ".17g")


def report_rows(report: dict) -> list:
    rows = []
    for run in report.get("runs", []):
        rid, seed = run.get("run_id", ""), run.get("seed", "")
        for epoch, v in enumerate(run.get("losses", [])):
            rows.append((rid, seed, "epoch_loss", epoch, _num(v)))
        for k, g in enumerate(run.get("gaps", [])):
            for metric in ("train_loss", "eval_loss", "gap"):
                rows.append((rid, seed, metric, k, _num(g[metric])))
        for k, e in enumerate(run.get("verifications", [])):
            for metric in ("discrepancy", "tolerance", "passed"):
                rows.append((rid, seed, f"{e['claim']}.{metric}", k, _num(e[metric])))
    return rows


def render(report: dict, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(str(c) for c in row) for row in report_rows(report)]
    return "\n".join(lines) + "\n"


def emit_report(report: dict, fmt: str = "json", path=None):
    """Write the report to ``path`` (stdout when ``None``); raises ``OSError`` on failure."""
    text = render(report, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
