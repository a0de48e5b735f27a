"""Observed panel of time series and its spatial layout.

A panel is an ``n x p`` matrix: rows are time points, columns are series.
Every series carries an integer location on the lattice ``Z^v``; when no
layout is supplied the series are placed at ``1..p`` on a line, in column
order.

All algorithms address time by integer position ``1..n`` (stored 0-based);
``time_index`` is carried along as metadata only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import DataValidationError, ParseError

__all__ = [
    "Panel",
    "SpatialLayout",
    "load_panel_csv",
    "save_panel_csv",
    "load_layout_json",
    "save_layout_json",
    "validate",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Panel:
    """Observed panel ``Y`` with ``n`` rows (time) and ``p`` columns (series).

    The values array is copied and frozen on construction. Structural
    checks live in :func:`validate` so that invalid panels can still be
    built and reported on.
    """

    values: np.ndarray
    series_ids: tuple[str, ...] = ()
    time_index: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise DataValidationError(
                f"panel values must be a 2-d array, got ndim={values.ndim}"
            )
        object.__setattr__(self, "values", _readonly(values))
        ids = tuple(str(s) for s in self.series_ids) if self.series_ids else tuple(
            f"s{j + 1}" for j in range(values.shape[1])
        )
        object.__setattr__(self, "series_ids", ids)
        if self.time_index is not None:
            object.__setattr__(self, "time_index", tuple(str(t) for t in self.time_index))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "Panel":
        """Return a panel with the same labels and new values."""
        return Panel(values, self.series_ids, self.time_index)

    def __repr__(self):
        return f"Panel(n={self.n}, p={self.p})"


@dataclass(frozen=True, eq=False)
class SpatialLayout:
    """Integer lattice locations of the series, one row per series."""

    locations: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        loc = np.asarray(self.locations)
        if loc.ndim == 1:
            loc = loc[:, None]
        if loc.ndim != 2:
            raise DataValidationError("layout locations must be a (p, v) array")
        if loc.size and not np.issubdtype(loc.dtype, np.integer):
            as_int = np.rint(loc).astype(np.int64)
            if not np.array_equal(as_int, loc):
                raise DataValidationError("layout coordinates must be integers")
            loc = as_int
        loc = loc.astype(np.int64, copy=False)
        dim = self.dim or loc.shape[1]
        if dim != loc.shape[1]:
            raise DataValidationError(
                f"layout dim={dim} does not match coordinate length {loc.shape[1]}"
            )
        object.__setattr__(self, "locations", _readonly(loc))
        object.__setattr__(self, "dim", int(dim))

    @classmethod
    def linear(cls, p: int) -> "SpatialLayout":
        """Default layout: series ``j`` sits at coordinate ``j`` (1-based)."""
        return cls(np.arange(1, p + 1)[:, None], 1)

    @property
    def p(self) -> int:
        return self.locations.shape[0]

    def ordering(self) -> np.ndarray:
        """Column order after sorting by coordinate (lexicographic for v > 1)."""
        keys = [self.locations[:, r] for r in range(self.dim - 1, -1, -1)]
        return np.lexsort(keys) if keys else np.arange(self.p)

    def __repr__(self):
        return f"SpatialLayout(dim={self.dim}, p={self.p})"


def validate(panel: Panel, layout: SpatialLayout | None = None) -> None:
    """Check every structural invariant of ``panel`` (and ``layout``).

    Raises
    ------
    DataValidationError
        On the first violated invariant, naming the offending row/series.
    """
    n, p = panel.values.shape
    if p < 1:
        raise DataValidationError(f"panel needs p >= 1 series, got p={p}")
    if n < 2:
        raise DataValidationError(f"panel needs n >= 2 time points, got n={n}")
    bad = ~np.isfinite(panel.values)
    if bad.any():
        t, j = map(int, np.argwhere(bad)[0])
        raise DataValidationError(
            f"non-finite value {panel.values[t, j]!r} at row {t + 1}, "
            f"series {j + 1} ({panel.series_ids[j]!r})"
        )
    if len(panel.series_ids) != p:
        raise DataValidationError(
            f"{len(panel.series_ids)} series ids given for {p} columns"
        )
    seen: dict[str, int] = {}
    for j, sid in enumerate(panel.series_ids):
        if sid in seen:
            raise DataValidationError(
                f"duplicate series id {sid!r} at columns {seen[sid] + 1} and {j + 1}"
            )
        seen[sid] = j
    if panel.time_index is not None and len(panel.time_index) != n:
        raise DataValidationError(
            f"time index has {len(panel.time_index)} labels for {n} rows"
        )
    if layout is None:
        return
    if layout.p != p:
        raise DataValidationError(f"layout has {layout.p} locations for {p} series")
    if layout.dim < 1:
        raise DataValidationError("layout dimension must be positive")
    _, first, counts = np.unique(
        layout.locations, axis=0, return_index=True, return_counts=True
    )
    if (counts > 1).any():
        dup = layout.locations[first[np.argmax(counts > 1)]]
        cols = np.flatnonzero((layout.locations == dup).all(axis=1)) + 1
        raise DataValidationError(
            f"locations must be distinct: series {cols.tolist()} share {dup.tolist()}"
        )


def _parse_cell(text: str, row: int, col: int, sid: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric cell {text!r} at row {row}, series {col} ({sid!r})"
        ) from None


def load_panel_csv(
    path: str | Path,
    layout: str | Path | Mapping[str, Sequence[int]] | None = None,
    time_column: str | None = None,
) -> tuple[Panel, SpatialLayout]:
    """Read a panel from CSV and, optionally, a JSON layout.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV, header row of series ids, one row per time point.
    layout : path-like or mapping, optional
        JSON object ``{series_id: [int, ...]}``. Defaults to ``1..p`` in
        column order.
    time_column : str, optional
        Header name of a column holding time labels instead of values.

    Returns
    -------
    panel, layout
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    if any(h == "" for h in header):
        raise ParseError(f"{path}: empty series id in header")
    tcol = None
    if time_column is not None:
        if time_column not in header:
            raise ParseError(f"{path}: time column {time_column!r} not in header")
        tcol = header.index(time_column)
    ids = [h for k, h in enumerate(header) if k != tcol]
    dup = {h for h in ids if ids.count(h) > 1}
    if dup:
        raise DataValidationError(f"{path}: duplicated series id(s) {sorted(dup)}")

    values = np.empty((len(rows) - 1, len(ids)))
    times = []
    for t, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {t} has {len(row)} fields, header has {len(header)}"
            )
        cells = [c.strip() for k, c in enumerate(row) if k != tcol]
        if tcol is not None:
            times.append(row[tcol].strip())
        for j, c in enumerate(cells):
            x = _parse_cell(c, t, j + 1, ids[j])
            if not math.isfinite(x):
                raise DataValidationError(
                    f"{path}: non-finite value {c!r} at row {t}, series {j + 1} ({ids[j]!r})"
                )
            values[t - 1, j] = x

    panel = Panel(values, tuple(ids), tuple(times) if tcol is not None else None)
    if layout is None:
        lay = SpatialLayout.linear(panel.p)
    else:
        lay = _layout_from_mapping(
            load_layout_json(layout) if not isinstance(layout, Mapping) else layout,
            panel.series_ids,
        )
    validate(panel, lay)
    return panel, lay


def _layout_from_mapping(
    mapping: Mapping[str, Sequence[int]], series_ids: Sequence[str]
) -> SpatialLayout:
    unknown = [k for k in mapping if k not in series_ids]
    if unknown:
        raise DataValidationError(f"layout ids not matching any column: {unknown}")
    missing = [s for s in series_ids if s not in mapping]
    if missing:
        raise DataValidationError(f"layout lacks coordinates for series {missing}")
    coords = [list(mapping[s]) for s in series_ids]
    dims = {len(c) for c in coords}
    if len(dims) != 1 or 0 in dims:
        raise DataValidationError(
            f"layout coordinates must share one positive length, got {sorted(dims)}"
        )
    for s, c in zip(series_ids, coords):
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in c):
            raise DataValidationError(f"layout coordinates of {s!r} are not integers: {c}")
    return SpatialLayout(np.array(coords, dtype=np.int64))


def load_layout_json(path: str | Path) -> dict[str, list[int]]:
    """Read a ``{series_id: [coords]}`` JSON layout file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON layout ({exc})") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: layout must be a JSON object")
    return data


def save_layout_json(path: str | Path, panel: Panel, layout: SpatialLayout) -> None:
    data = {sid: [int(x) for x in loc] for sid, loc in zip(panel.series_ids, layout.locations)}
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")


def save_panel_csv(path: str | Path, panel: Panel) -> None:
    """Write ``panel`` as CSV; floats use ``repr`` so reloading is exact."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(panel.series_ids)
        for row in panel.values:
            w.writerow([repr(float(x)) for x in row])
