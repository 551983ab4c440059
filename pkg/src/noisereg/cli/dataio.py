"""CSV datasets.

Header columns ``x0..x(a-1)``, optionally ``z0..z(b-1)``, then
``y0..y(c-1)`` and an optional ``split`` column (``train``, ``val`` or
``domain``; missing means ``train``). Files written by the ``augment``
command carry two extra provenance columns, ``origin_index`` and
``provenance``, which the loader skips.
"""

from __future__ import annotations

import csv
import re

import numpy as np

from ..experiment import SPLITS, Dataset

PROVENANCE_COLUMNS = ("origin_index", "provenance")
_COLUMN = re.compile(r"^([xzy])(\d+)$")


class DatasetError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _layout(header: list[str], path) -> dict:
    blocks = {"x": [], "z": [], "y": []}
    split_col = None
    for j, name in enumerate(header):
        m = _COLUMN.match(name)
        if m:
            blocks[m.group(1)].append((int(m.group(2)), j))
        elif name == "split":
            split_col = j
        elif name not in PROVENANCE_COLUMNS:
            raise DatasetError(f"{path}: unknown column {name!r}")
    for key, cols in blocks.items():
        if [i for i, _ in sorted(cols)] != list(range(len(cols))):
            raise DatasetError(f"{path}: {key}-columns must be numbered {key}0..{key}{len(cols) - 1}")
    if not blocks["x"] or not blocks["y"]:
        raise DatasetError(f"{path}: header needs at least one x-column and one y-column")
    return {k: [j for _, j in sorted(v)] for k, v in blocks.items()} | {"split": split_col}


def load_dataset_csv(path) -> Dataset:
    """Read a dataset; data rows are numbered from 1 in error messages."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    cols = _layout(header, path)
    body = rows[1:]
    if not body:
        raise DatasetError(f"{path}: no data rows")
    blocks = {k: np.empty((len(body), len(cols[k]))) for k in "xzy"}
    split = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DatasetError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for key in "xzy":
            for i, j in enumerate(cols[key]):
                try:
                    blocks[key][r - 1, i] = float(row[j])
                except ValueError:
                    raise DatasetError(f"{path}: non-numeric cell at ({r}, {header[j]}): {row[j]!r}") from None
        tag = "train" if cols["split"] is None else row[cols["split"]].strip()
        if tag not in SPLITS:
            raise DatasetError(f"{path}: bad split tag at ({r}, split): {tag!r}")
        split.append(tag)
    z = blocks["z"] if cols["z"] else None
    return Dataset(blocks["x"], blocks["y"], np.array(split, dtype=object), z=z)


def dataset_rows(data: Dataset, extra: dict | None = None):
    """Header and rows for :func:`write_csv`; ``extra`` maps column name to per-row values."""
    header = [f"x{i}" for i in range(data.x.shape[1])]
    if data.z is not None:
        header += [f"z{i}" for i in range(data.z.shape[1])]
    header += [f"y{i}" for i in range(data.y.shape[1])] + ["split"]
    extra = extra or {}
    header += list(extra)
    rows = []
    for k in range(len(data)):
        row = [_fmt(v) for v in data.x[k]]
        if data.z is not None:
            row += [_fmt(v) for v in data.z[k]]
        row += [_fmt(v) for v in data.y[k]] + [str(data.split[k])]
        row += [str(col[k]) for col in extra.values()]
        rows.append(row)
    return header, rows


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def save_dataset_csv(data: Dataset, path, extra: dict | None = None):
    write_csv(path, *dataset_rows(data, extra))
