"""CSV input and output.

Floats are written with 17 significant digits, which round-trips IEEE
doubles exactly. Writes go to a temporary file that is renamed into place.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .synth import Panel


class DataFileError(OSError):
    """A data file is missing or unreadable."""


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return ""
        return format(v, ".17g")
    return str(value)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], columns: Sequence[Sequence]) -> None:
    """Write equal-length ``columns`` under ``header``. NaN and None become empty cells."""
    if len(header) != len(columns):
        raise InputError("header and columns differ in length")
    lengths = {len(c) for c in columns}
    if len(lengths) > 1:
        raise InputError(f"columns have different lengths: {sorted(lengths)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow([format_cell(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def write_matrix(path, names: Sequence[str], X: np.ndarray) -> None:
    X = np.asarray(X)
    write_csv(path, names, [X[:, j] for j in range(X.shape[1])])


def _open(path):
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"data file not found: {path}")
    try:
        return path.open(newline="")
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with _open(path) as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise InputError(f"{path}: header repeats a column name")
    body = [r for r in rows[1:] if r]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}: line {i} has {len(r)} cells, header has {len(header)}")
    return header, body


def _parse(cell: str, path, line: int, col: str, allow_missing: bool) -> float:
    s = cell.strip()
    if s == "" and allow_missing:
        return math.nan
    try:
        v = float(s)
    except ValueError:
        raise InputError(f"{path}: line {line}, column {col!r}: {cell!r} is not a number") from None
    if not math.isfinite(v):
        raise InputError(f"{path}: line {line}, column {col!r}: non-finite value {cell!r}")
    return v


def read_table(path, allow_missing: bool = False) -> dict[str, np.ndarray]:
    """Numeric CSV as ``{column: values}`` in header order."""
    header, body = read_rows(path)
    out = {}
    for c, name in enumerate(header):
        out[name] = np.array([_parse(r[c], path, i, name, allow_missing) for i, r in enumerate(body, start=2)])
    return out


def table_matrix(table: Mapping[str, np.ndarray], columns: Sequence[str] | None = None) -> np.ndarray:
    cols = list(table) if columns is None else list(columns)
    for c in cols:
        if c not in table:
            raise InputError(f"column {c!r} not found")
    return np.column_stack([table[c] for c in cols])


def _select_periods(periods: list[str], T: int, S: int, first_period: str | None, path) -> list[int]:
    start = 0
    if first_period is not None:
        if first_period not in periods:
            raise InputError(f"{path}: first period {first_period!r} not found")
        start = periods.index(first_period)
    if start + T + S > len(periods):
        raise InputError(
            f"{path}: need T+S={T + S} periods from {periods[start]!r} but only {len(periods) - start} remain"
        )
    return list(range(start, start + T + S))


def _assemble(units, periods, values: dict, target: str, donors, T, S, first_period, path) -> Panel:
    if target not in units:
        raise InputError(f"{path}: target unit {target!r} not found")
    if donors is None:
        donors = [u for u in units if u != target]
    else:
        donors = [str(d) for d in donors]
        unknown = [d for d in donors if d not in units]
        if unknown:
            raise InputError(f"{path}: donor units not found: {unknown}")
        if target in donors:
            raise InputError(f"{path}: target unit {target!r} is listed as a donor")
        if len(set(donors)) != len(donors):
            raise InputError(f"{path}: donor list repeats a unit")
    idx = _select_periods(periods, T, S, first_period, path)
    rows = [target] + donors
    Y = np.array([[values[u][periods[p]] for p in idx] for u in rows])
    return Panel(outcomes=Y, T=T, S=S, unit_names=tuple(rows), period_labels=tuple(periods[p] for p in idx))


def _period_key(label: str):
    try:
        return (0, float(label), label)
    except ValueError:
        return (1, 0.0, label)


def read_panel_long(path, target: str, T: int, S: int, unit_col="unit", period_col="period",
                    value_col="value", donors=None, first_period: str | None = None) -> Panel:
    """Long format: one ``(unit, period, value)`` row per observation.

    Numeric period labels sort numerically, others lexically.
    """
    header, body = read_rows(path)
    for c in (unit_col, period_col, value_col):
        if c not in header:
            raise InputError(f"{path}: column {c!r} not found (have {header})")
    iu, ip, iv = header.index(unit_col), header.index(period_col), header.index(value_col)
    values: dict[str, dict[str, float]] = {}
    units: list[str] = []
    period_set: set[str] = set()
    for line, r in enumerate(body, start=2):
        u, p = r[iu].strip(), r[ip].strip()
        v = _parse(r[iv], path, line, value_col, False)
        if u not in values:
            values[u] = {}
            units.append(u)
        if p in values[u]:
            raise InputError(f"{path}: line {line}: duplicate observation for unit {u!r}, period {p!r}")
        values[u][p] = v
        period_set.add(p)
    periods = sorted(period_set, key=_period_key)
    for u in units:
        gaps = [p for p in periods if p not in values[u]]
        if gaps:
            raise InputError(f"{path}: unit {u!r} is missing periods {gaps[:5]}")
    return _assemble(units, periods, values, target, donors, T, S, first_period, path)


def read_panel_wide(path, target: str, T: int, S: int, unit_col="unit", donors=None,
                    first_period: str | None = None) -> Panel:
    """Wide format: one row per unit, one column per period in time order."""
    header, body = read_rows(path)
    if unit_col not in header:
        raise InputError(f"{path}: column {unit_col!r} not found (have {header})")
    iu = header.index(unit_col)
    periods = [h for i, h in enumerate(header) if i != iu]
    values: dict[str, dict[str, float]] = {}
    units = []
    for line, r in enumerate(body, start=2):
        u = r[iu].strip()
        if u in values:
            raise InputError(f"{path}: line {line}: unit {u!r} appears twice")
        units.append(u)
        values[u] = {}
        for i, h in enumerate(header):
            if i != iu:
                values[u][h] = _parse(r[i], path, line, h, False)
    return _assemble(units, periods, values, target, donors, T, S, first_period, path)


def write_panel_wide(path, panel: Panel) -> None:
    names = panel.unit_names or tuple(f"u{i}" for i in range(panel.N + 1))
    labels = panel.period_labels or tuple(str(t) for t in range(panel.T + panel.S))
    cols = [list(names)] + [panel.outcomes[:, t] for t in range(panel.outcomes.shape[1])]
    write_csv(path, ["unit", *labels], cols)
