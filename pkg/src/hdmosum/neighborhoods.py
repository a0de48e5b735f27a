"""Spatial neighborhoods and temporal-spatial windows.

Conventions
-----------
* Series are addressed by 0-based column index (``members``).
* Neighborhoods carry a user-facing integer ``id``; a :class:`NeighborhoodSet`
  keeps them sorted by id, and "position" below means the index in that order.
* Time is 1-based: a window centre ``i`` ranges over ``bn+1 .. n-bn``.

The window ``S[i, s]`` covers times ``i-bn .. i+bn-1`` and the series of
neighborhood ``s``; the vertical line ``V[t, l]`` is time ``t`` across the
series of neighborhood ``l``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .exceptions import ConfigError, DataValidationError, ParseError
from .panel import Panel, SpatialLayout

__all__ = [
    "Neighborhood",
    "NeighborhoodSet",
    "WindowRef",
    "enumerate_contiguous",
    "enumerate_rectangles",
    "from_intervals",
    "influenced_set",
    "check_separation",
    "load_neighborhoods_json",
    "save_neighborhoods_json",
]

DEFAULT_SIZE_RATIO = 8.0


class WindowRef(NamedTuple):
    """Centre of a temporal-spatial window: time ``i`` and neighborhood id ``s``."""

    i: int
    s: int


@dataclass(frozen=True, eq=False)
class Neighborhood:
    """A set of series sharing one spatial window.

    Parameters
    ----------
    id : int
    members : sequence of int
        0-based column indices; stored sorted and unique.
    bounds : sequence of (lo, hi), optional
        Inclusive lattice rectangle the members were cut from.
    """

    id: int
    members: tuple[int, ...]
    bounds: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        mem = tuple(sorted({int(j) for j in self.members}))
        if not mem:
            raise DataValidationError(f"neighborhood {self.id} has no members")
        object.__setattr__(self, "members", mem)
        object.__setattr__(self, "id", int(self.id))
        if self.bounds is not None:
            object.__setattr__(
                self, "bounds", tuple((int(lo), int(hi)) for lo, hi in self.bounds)
            )

    @property
    def size(self) -> int:
        return len(self.members)

    def __repr__(self):
        return f"Neighborhood(id={self.id}, size={self.size})"


class NeighborhoodSet:
    """Ordered collection of ``S`` neighborhoods over ``p`` series.

    Parameters
    ----------
    neighborhoods : iterable of Neighborhood
        Ids must be unique; the set is kept sorted by id.
    p : int
        Number of series; every member must lie in ``0..p-1``.
    size_ratio : float, default 8
        Largest allowed ``size_max / size_min``. Use ``math.inf`` to disable.
    """

    def __init__(
        self,
        neighborhoods: Iterable[Neighborhood],
        p: int,
        size_ratio: float = DEFAULT_SIZE_RATIO,
    ):
        nb = sorted(neighborhoods, key=lambda h: h.id)
        if not nb:
            raise ConfigError("a neighborhood set needs at least one neighborhood")
        ids = [h.id for h in nb]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataValidationError(f"duplicate neighborhood ids {dup}")
        for h in nb:
            if h.members[0] < 0 or h.members[-1] >= p:
                raise DataValidationError(
                    f"neighborhood {h.id} references series outside 0..{p - 1}"
                )
        sizes = np.array([h.size for h in nb])
        if sizes.max() > size_ratio * sizes.min():
            raise ConfigError(
                f"neighborhood sizes range {sizes.min()}..{sizes.max()}, "
                f"ratio exceeds the configured bound {size_ratio}"
            )
        self.neighborhoods: tuple[Neighborhood, ...] = tuple(nb)
        self.p = int(p)
        self.size_ratio = size_ratio
        self.sizes = sizes
        self.sizes.setflags(write=False)
        self._pos = {h.id: k for k, h in enumerate(nb)}
        rows = np.repeat(np.arange(len(nb)), sizes)
        cols = np.concatenate([h.members for h in nb])
        self._membership = sparse.csr_matrix(
            (np.ones(cols.size), (rows, cols)), shape=(len(nb), p)
        )

    @property
    def S(self) -> int:
        return len(self.neighborhoods)

    @property
    def ids(self) -> list[int]:
        return [h.id for h in self.neighborhoods]

    @property
    def size_min(self) -> int:
        return int(self.sizes.min())

    @property
    def size_max(self) -> int:
        return int(self.sizes.max())

    def __len__(self):
        return self.S

    def __iter__(self):
        return iter(self.neighborhoods)

    def __repr__(self):
        return f"NeighborhoodSet(S={self.S}, p={self.p}, sizes={self.size_min}..{self.size_max})"

    def position(self, nid: int) -> int:
        """Position of neighborhood ``nid`` in the sorted set."""
        try:
            return self._pos[nid]
        except KeyError:
            raise ConfigError(f"unknown neighborhood id {nid}") from None

    def membership(self) -> sparse.csr_matrix:
        """``S x p`` 0/1 membership matrix (float entries)."""
        return self._membership

    def member_sets(self) -> list[frozenset[int]]:
        return [frozenset(h.members) for h in self.neighborhoods]

    def overlapping(self, positions: np.ndarray | Sequence[int]) -> np.ndarray:
        """Boolean mask of neighborhoods sharing a series with any of ``positions``."""
        M = self._membership
        cover = np.asarray(M[np.asarray(positions, dtype=int)].sum(axis=0)).ravel() > 0
        return np.asarray(M @ cover.astype(float)).ravel() > 0

    def reachable(self, pos: int) -> np.ndarray:
        """Neighborhoods ``s`` for which some ``l`` overlaps both ``pos`` and ``s``."""
        first = self.overlapping([pos])
        return self.overlapping(np.flatnonzero(first))


def _check_sizes(p, min_size, max_size, stride):
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if min_size < 1 or max_size < min_size:
        raise ConfigError(f"need 1 <= min_size <= max_size, got {min_size}..{max_size}")
    if min_size > p:
        raise ConfigError(f"min_size={min_size} exceeds p={p}: no neighborhood fits")


def enumerate_contiguous(
    p: int,
    min_size: int,
    max_size: int,
    stride: int = 1,
    size_ratio: float = DEFAULT_SIZE_RATIO,
) -> NeighborhoodSet:
    """All runs of adjacent series with length in ``[min_size, max_size]``.

    Start positions advance by ``stride``; ids are assigned 1..S in the order
    (size, start).

    Examples
    --------
    >>> [h.members for h in enumerate_contiguous(4, 2, 2)]
    [(0, 1), (1, 2), (2, 3)]
    """
    _check_sizes(p, min_size, max_size, stride)
    out = []
    for size in range(min_size, min(max_size, p) + 1):
        for start in range(0, p - size + 1, stride):
            out.append(
                Neighborhood(len(out) + 1, range(start, start + size), ((start + 1, start + size),))
            )
    return NeighborhoodSet(out, p, size_ratio)


def enumerate_rectangles(
    layout: SpatialLayout,
    side_min: int,
    side_max: int,
    stride: int = 1,
    shape_ratio: float = DEFAULT_SIZE_RATIO,
    size_ratio: float = DEFAULT_SIZE_RATIO,
) -> NeighborhoodSet:
    """Hyper-rectangles on the lattice spanned by ``layout``.

    Every side length (counted in lattice points) lies in
    ``[side_min, side_max]`` and ``max side / min side <= shape_ratio``.
    Rectangles are anchored at every ``stride``-th lattice point of the
    bounding box and must fit inside it. Rectangles with no series are
    dropped; rectangles with identical member sets are kept once (first
    seen).
    """
    if side_min < 1 or side_max < side_min:
        raise ConfigError(f"need 1 <= side_min <= side_max, got {side_min}..{side_max}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if shape_ratio < 1:
        raise ConfigError(f"shape_ratio must be >= 1, got {shape_ratio}")
    loc = layout.locations
    lo_box, hi_box = loc.min(axis=0), loc.max(axis=0)
    span = hi_box - lo_box + 1
    # membership lookup through a dense lattice grid
    grid = np.full(tuple(span), -1, dtype=np.int64)
    grid[tuple((loc - lo_box).T)] = np.arange(layout.p)

    out: list[Neighborhood] = []
    seen: set[tuple[int, ...]] = set()
    sides = range(side_min, side_max + 1)
    for shape in itertools.product(sides, repeat=layout.dim):
        if max(shape) > shape_ratio * min(shape):
            continue
        if any(sd > sp for sd, sp in zip(shape, span)):
            continue
        anchors = [range(0, sp - sd + 1, stride) for sd, sp in zip(shape, span)]
        for corner in itertools.product(*anchors):
            block = grid[tuple(slice(c, c + sd) for c, sd in zip(corner, shape))]
            members = tuple(sorted(block[block >= 0].tolist()))
            if not members or members in seen:
                continue
            seen.add(members)
            bounds = tuple(
                (int(lo_box[r] + c), int(lo_box[r] + c + sd - 1))
                for r, (c, sd) in enumerate(zip(corner, shape))
            )
            out.append(Neighborhood(len(out) + 1, members, bounds))
    if not out:
        raise ConfigError("no rectangle satisfies the side and shape constraints")
    return NeighborhoodSet(out, layout.p, size_ratio)


def from_intervals(
    p: int,
    intervals: Sequence[tuple[int, int]],
    size_ratio: float = DEFAULT_SIZE_RATIO,
) -> NeighborhoodSet:
    """Neighborhoods from 1-based inclusive column ranges, ids ``1..S``.

    >>> from_intervals(30, [(1, 18), (5, 22)]).sizes.tolist()
    [18, 18]
    """
    nb = []
    for k, (a, b) in enumerate(intervals, start=1):
        if not 1 <= a <= b <= p:
            raise ConfigError(f"interval ({a}, {b}) outside 1..{p}")
        nb.append(Neighborhood(k, range(a - 1, b), ((a, b),)))
    return NeighborhoodSet(nb, p, size_ratio)


def _time_range(tau: int, bn: int, n: int) -> tuple[int, int]:
    """Window centres ``t`` whose window covers time ``tau`` (may be empty)."""
    return max(tau - bn + 1, bn + 1), min(tau + bn, n - bn)


def influenced_set(
    tau: int, s: int, bn: int, nbhds: NeighborhoodSet, n: int
) -> set[WindowRef]:
    """Vertical lines ``V[t, l]`` whose window ``S[t, l]`` meets ``V[tau, s]``.

    That is ``tau-bn+1 <= t <= tau+bn`` (clipped to ``bn+1 .. n-bn``) and
    neighborhood ``l`` shares at least one series with neighborhood ``s``.
    """
    if bn < 1:
        raise ConfigError(f"bn must be >= 1, got {bn}")
    pos = nbhds.position(s)
    lo, hi = _time_range(tau, bn, n)
    ids = [nbhds.neighborhoods[k].id for k in np.flatnonzero(nbhds.overlapping([pos]))]
    return {WindowRef(t, l) for t in range(lo, hi + 1) for l in ids}


def check_separation(
    breaks: Sequence[tuple[int, int]], bn: int, nbhds: NeighborhoodSet, n: int
) -> bool:
    """True iff no window ``S[t, l]`` meets the influenced sets of two breaks.

    A window ``S[t', l']`` meets the influenced set ``W`` when some
    ``V[t, l]`` in ``W`` has ``t'-bn <= t <= t'+bn-1`` and shares a series
    with ``l'``. For a break ``(tau, s)`` the reachable ``l'`` are exactly
    the neighborhoods two overlap-steps away from ``s``, so the check
    reduces to interval arithmetic.
    """
    if len(set(breaks)) != len(breaks):
        raise ConfigError("breaks must be distinct")
    info = []
    for tau, s in breaks:
        lo, hi = _time_range(tau, bn, n)
        reach = nbhds.reachable(nbhds.position(s))
        # centres t' whose window covers part of [lo, hi]
        info.append((lo, hi, max(lo - bn + 1, bn + 1), min(hi + bn, n - bn), reach))
    for a, b in itertools.combinations(info, 2):
        if a[0] > a[1] or b[0] > b[1]:
            continue
        if not (a[4] & b[4]).any():
            continue
        if max(a[2], b[2]) <= min(a[3], b[3]):
            return False
    return True


def load_neighborhoods_json(
    path: str | Path,
    panel: Panel,
    layout: SpatialLayout | None = None,
    size_ratio: float = DEFAULT_SIZE_RATIO,
) -> NeighborhoodSet:
    """Read ``[{"id": k, "members": [series ids]} | {"id": k, "bounds": [[lo, hi], ...]}]``.

    ``bounds`` entries are resolved against ``layout`` (default: ``1..p``).
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid neighborhood JSON ({exc})") from None
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a JSON list of neighborhoods")
    col = {sid: j for j, sid in enumerate(panel.series_ids)}
    layout = layout or SpatialLayout.linear(panel.p)
    out = []
    for entry in data:
        if not isinstance(entry, dict) or "id" not in entry:
            raise ParseError(f"{path}: every neighborhood needs an 'id'")
        nid = entry["id"]
        if "members" in entry:
            missing = [m for m in entry["members"] if str(m) not in col]
            if missing:
                raise DataValidationError(
                    f"{path}: neighborhood {nid} names unknown series {missing}"
                )
            out.append(Neighborhood(nid, [col[str(m)] for m in entry["members"]]))
        elif "bounds" in entry:
            bounds = entry["bounds"]
            if len(bounds) != layout.dim:
                raise DataValidationError(
                    f"{path}: neighborhood {nid} has {len(bounds)} bounds for dim {layout.dim}"
                )
            lo = np.array([b[0] for b in bounds])
            hi = np.array([b[1] for b in bounds])
            inside = ((layout.locations >= lo) & (layout.locations <= hi)).all(axis=1)
            out.append(Neighborhood(nid, np.flatnonzero(inside).tolist(), bounds))
        else:
            raise ParseError(f"{path}: neighborhood {nid} needs 'members' or 'bounds'")
    return NeighborhoodSet(out, panel.p, size_ratio)


def save_neighborhoods_json(path: str | Path, nbhds: NeighborhoodSet, panel: Panel) -> None:
    data = [
        {"id": h.id, "members": [panel.series_ids[j] for j in h.members]}
        for h in nbhds
    ]
    Path(path).write_text(json.dumps(data, indent=1), encoding="utf-8")
