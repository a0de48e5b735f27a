"""Moving-sum jump profiles and the aggregated test statistics.

For a window centre ``i`` (1-based, ``bn+1 <= i <= n-bn``) the left window
holds rows ``i-bn .. i-1`` and the right window rows ``i .. i+bn-1``. The
standardized jump of series ``j`` is

    V[i, j] = (mean(right) - mean(left)) / sigma_j

so an upward step of size ``gamma`` at ``tau`` (rows ``t >= tau`` shifted)
peaks at ``V[tau] = gamma / sigma`` with a triangular profile of half-width
``bn``. All statistics use ``V**2`` and are therefore sign-free.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .exceptions import ConfigError, DataValidationError
from .lrv import LongRunEstimate
from .neighborhoods import NeighborhoodSet, WindowRef
from .panel import Panel

__all__ = [
    "MosumProfile",
    "StatProfile",
    "resolve_bn",
    "jump_profile",
    "centering",
    "stat_global",
    "stat_twoway",
]


class CenteringModel(Protocol):
    """Anything that can report the exact null variance of each ``V[i, j]``."""

    def center_terms(self, bn: int, p: int) -> np.ndarray: ...


def resolve_bn(n: int, bn: int | None = None, b: float | None = None) -> int:
    """Window half-width from either an integer ``bn`` or a fraction ``b``.

    A fraction is converted with ``floor(b * n)``. Exactly one form must be
    given and the result must satisfy ``1 <= bn <= (n - 1) // 2``.
    """
    if (bn is None) == (b is None):
        raise ConfigError("give exactly one of bn (integer) or b (fraction)")
    if b is not None:
        if not 0 < b < 0.5:
            raise ConfigError(f"bandwidth fraction b must lie in (0, 0.5), got {b}")
        bn = int(math.floor(b * n))
    bn = int(bn)
    if not 1 <= bn <= (n - 1) // 2:
        raise ConfigError(f"bandwidth bn={bn} outside 1..{(n - 1) // 2} for n={n}")
    return bn


def centering(
    mode: str,
    bn: int,
    p: int,
    err_model: CenteringModel | None = None,
) -> np.ndarray:
    """Per-series centering terms ``c_j`` (their sum is the global centre).

    Parameters
    ----------
    mode : {"asymptotic", "exact"}
        ``asymptotic`` gives ``2 / bn`` per series. ``exact`` asks
        ``err_model.center_terms`` for ``Var(V[i, j])`` under the null; for
        iid noise this is again ``2 / bn``.
    bn, p : int
    err_model : object with ``center_terms(bn, p)``, optional
        Required for ``exact``.

    Returns
    -------
    (p,) array

    Examples
    --------
    >>> centering("asymptotic", 20, 3)
    array([0.1, 0.1, 0.1])
    """
    if mode == "asymptotic":
        return np.full(p, 2.0 / bn)
    if mode == "exact":
        if err_model is None:
            raise ConfigError("exact centering needs an error model")
        c = np.array(err_model.center_terms(bn, p), dtype=float)
        if c.shape != (p,) or (c < 0).any():
            raise ConfigError("error model returned invalid centering terms")
        return c
    raise ConfigError(f"unknown centering mode {mode!r}")


@dataclass(frozen=True, eq=False)
class MosumProfile:
    """Standardized jump estimates for every admissible window centre.

    Attributes
    ----------
    bn : int
    n : int
    V : (n - 2 bn, p) array
        Row ``r`` corresponds to window centre ``i = bn + 1 + r``.
    center_series : (p,) array
        Per-series centering terms ``c_j``.
    """

    bn: int
    n: int
    V: np.ndarray
    center_series: np.ndarray

    @property
    def p(self) -> int:
        return self.V.shape[1]

    @property
    def n_eff(self) -> int:
        return self.V.shape[0]

    @property
    def times(self) -> np.ndarray:
        """1-based window centres ``bn+1 .. n-bn``."""
        return np.arange(self.bn + 1, self.n - self.bn + 1)

    @property
    def center_global(self) -> float:
        return float(self.center_series.sum())

    def center_nbhd(self, nbhds: NeighborhoodSet) -> np.ndarray:
        """Neighborhood centres ``sum_{j in L_s} c_j``, shape ``(S,)``."""
        return np.asarray(nbhds.membership() @ self.center_series).ravel()


def jump_profile(
    panel,
    bn: int,
    lrv: LongRunEstimate | np.ndarray | None = None,
    centering_mode: str = "asymptotic",
    err_model: CenteringModel | None = None,
) -> MosumProfile:
    """Compute ``V[i, j]`` for all ``i`` in ``bn+1 .. n-bn`` via prefix sums.

    Parameters
    ----------
    panel : Panel or (n, p) array
    bn : int
        Window half-width, ``1 <= bn <= (n-1) // 2``.
    lrv : LongRunEstimate or (p,) array, optional
        Long-run standard deviations; unit scale when omitted.
    centering_mode, err_model
        Passed to :func:`centering`.
    """
    Y = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = Y.shape
    if not 1 <= bn <= (n - 1) // 2:
        raise ConfigError(f"bandwidth bn={bn} outside 1..{(n - 1) // 2} for n={n}")
    if lrv is None:
        sigma = np.ones(p)
    else:
        sigma = lrv.sigma_diag if isinstance(lrv, LongRunEstimate) else np.asarray(lrv, float)
    if sigma.shape != (p,):
        raise DataValidationError(f"{sigma.size} long-run scales for {p} series")
    if not (np.isfinite(sigma).all() and (sigma > 0).all()):
        raise DataValidationError("long-run scales must be finite and positive")

    # de-meaning keeps prefix sums small without changing any difference
    C = np.zeros((n + 1, p))
    np.cumsum(Y - Y.mean(axis=0), axis=0, out=C[1:])
    i = np.arange(bn + 1, n - bn + 1)
    left = C[i - 1] - C[i - bn - 1]
    right = C[i + bn - 1] - C[i - 1]
    V = (right - left) / (bn * sigma)
    V.setflags(write=False)
    c = centering(centering_mode, bn, p, err_model)
    c.setflags(write=False)
    return MosumProfile(bn, n, V, c)


@dataclass(frozen=True, eq=False)
class StatProfile:
    """Per-window aggregated statistic and its maximum.

    Attributes
    ----------
    mode : {"global", "twoway"}
    values : array
        ``(n_eff,)`` for global mode, ``(n_eff, S)`` for Two-Way mode.
    times : (n_eff,) array of 1-based window centres.
    nbhd_ids : list of int or None
    max_value : float
    argmax : WindowRef
        Smallest ``i`` attaining the maximum, then smallest neighborhood
        position; ``s`` is ``None`` in global mode.
    """

    mode: str
    values: np.ndarray
    times: np.ndarray
    nbhd_ids: list[int] | None
    max_value: float
    argmax: WindowRef

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            if self.mode == "global":
                w.writerow(["i", "value"])
                for t, v in zip(self.times, self.values):
                    w.writerow([int(t), repr(float(v))])
            else:
                w.writerow(["i", "s", "value"])
                for r, t in enumerate(self.times):
                    for k, sid in enumerate(self.nbhd_ids):
                        w.writerow([int(t), sid, repr(float(self.values[r, k]))])


def stat_global(profile: MosumProfile) -> StatProfile:
    """``|V_i|^2 - cbar`` for every ``i`` and its maximum ``Q_n``."""
    vals = np.einsum("ij,ij->i", profile.V, profile.V) - profile.center_global
    r = int(np.argmax(vals))
    return StatProfile(
        "global", vals, profile.times, None, float(vals[r]), WindowRef(int(profile.times[r]), None)
    )


def stat_twoway(profile: MosumProfile, nbhds: NeighborhoodSet) -> StatProfile:
    """``|L_s|^{-1/2} (sum_{j in L_s} V[i, j]^2 - cbar_s)`` and its maximum."""
    if nbhds.p != profile.p:
        raise DataValidationError(
            f"neighborhoods cover {nbhds.p} series, profile has {profile.p}"
        )
    M = nbhds.membership()
    sq = np.asarray(M @ (profile.V * profile.V).T).T  # (n_eff, S)
    vals = (sq - profile.center_nbhd(nbhds)) / np.sqrt(nbhds.sizes)
    r, k = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return StatProfile(
        "twoway",
        vals,
        profile.times,
        nbhds.ids,
        float(vals[r, k]),
        WindowRef(int(profile.times[r]), nbhds.ids[k]),
    )
