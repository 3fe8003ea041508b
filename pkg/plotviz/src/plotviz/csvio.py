"""CSV parsing for the solver's artifact files.

Readers validate headers against the documented layouts and return plain
column dictionaries; numbers never get recomputed here, only parsed.
"""

import csv

import numpy as np


class PlotDataError(ValueError):
    """Input file missing, malformed, or not matching a documented layout."""


def read_columns(path: str, required: tuple[str, ...]) -> dict[str, list[str]]:
    """Columns of a CSV file whose header starts with `required`.

    Extra trailing columns are allowed (artifact layouts may grow); missing
    or reordered ones are not.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise PlotDataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise PlotDataError(f"{path} is empty")
    header = rows[0]
    if tuple(header[: len(required)]) != tuple(required):
        raise PlotDataError(
            f"{path} header {header} does not match expected {list(required)}"
        )
    if len(rows) == 1:
        raise PlotDataError(f"{path} has a header but no data rows")
    width = len(header)
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise PlotDataError(f"{path} line {i} has {len(row)} cells, not {width}")
    return {name: [row[j] for row in rows[1:]] for j, name in enumerate(header)}


def to_floats(cells: list[str]) -> np.ndarray:
    """Numeric column; empty cells (unfilled reference-row entries) -> NaN."""
    out = np.empty(len(cells))
    for i, cell in enumerate(cells):
        if cell == "":
            out[i] = np.nan
        else:
            try:
                out[i] = float(cell)
            except ValueError as exc:
                raise PlotDataError(f"non-numeric cell {cell!r}") from exc
    return out
