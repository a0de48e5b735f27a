"""Iterative peak extraction for the global and Two-Way statistics.

Both detectors follow the same loop: keep the window centres whose
statistic exceeds the threshold, repeatedly take the largest survivor
(ties to the smallest time, then the smallest neighborhood position),
record it, and delete every survivor that the found break can influence.

* Global mode deletes centres within ``2 bn`` of the peak.
* Two-Way mode deletes the vertical line ``V[t, s]`` whenever some window
  ``S[i, l]`` with an admissible centre meets both ``V[t, s]`` and the peak
  line. In time this means ``|t - tau| <= 2 bn - 1``; in space, some
  neighborhood ``l`` overlaps both ``s`` and the peak neighborhood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .lrv import LongRunEstimate
from .mosum import CenteringModel, jump_profile, stat_global, stat_twoway
from .neighborhoods import NeighborhoodSet, check_separation
from .panel import Panel

__all__ = [
    "Break",
    "DetectionResult",
    "estimate_jump",
    "detect_global",
    "detect_twoway",
]


@dataclass(eq=False)
class Break:
    """One detected break."""

    tau: int
    s: int | None
    gamma: np.ndarray
    stat_value: float
    boundary_clipped: bool = False

    def to_dict(self) -> dict:
        d = {"tau": self.tau}
        if self.s is not None:
            d["s"] = self.s
        d.update(
            stat_value=self.stat_value,
            gamma=[float(x) for x in self.gamma],
            boundary_clipped=self.boundary_clipped,
        )
        return d


@dataclass(eq=False)
class DetectionResult:
    """Output of :func:`detect_global` or :func:`detect_twoway`.

    Attributes
    ----------
    mode : {"global", "twoway"}
    breaks : list of Break
        In extraction order (decreasing statistic).
    delta_hat : float or None
        ``min_k | |gamma_k / sigma|^2 - cbar |^{1/2}`` with the global centre
        ``cbar`` in both modes; ``None`` when nothing was found.
    delta_hat_local : float or None
        Two-Way only: the same quantity restricted to the detected
        neighborhood and centred by its own ``cbar_s``.
    omega_used : float
    max_stat : float
        ``Q_n`` or ``Q_n^diamond``.
    separation_ok : bool or None
        Two-Way only: whether the detected breaks satisfy the
        temporal-spatial separation condition.
    """

    mode: str
    breaks: list[Break]
    delta_hat: float | None
    omega_used: float
    max_stat: float
    delta_hat_local: float | None = None
    separation_ok: bool | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def k_hat(self) -> int:
        return len(self.breaks)

    @property
    def taus(self) -> list[int]:
        return [b.tau for b in self.breaks]

    def to_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "k_hat": self.k_hat,
            "omega_used": self.omega_used,
            "max_stat": self.max_stat,
            "breaks": [b.to_dict() for b in self.breaks],
            "delta_hat": self.delta_hat,
        }
        if self.mode == "twoway":
            d["delta_hat_local"] = self.delta_hat_local
            d["separation_ok"] = self.separation_ok
        if self.warnings:
            d["warnings"] = list(self.warnings)
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _values(panel) -> np.ndarray:
    Y = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    return Y[:, None] if Y.ndim == 1 else Y


def estimate_jump(panel, tau_hat: int, bn: int) -> tuple[np.ndarray, bool]:
    """Jump estimate at ``tau_hat``: mean of rows ``tau+bn-1 .. tau+2bn-2``
    minus mean of rows ``tau-2bn .. tau-bn-1`` (1-based, inclusive).

    The two windows sit ``2 bn - 1`` apart, so a step anywhere within
    ``bn - 1`` of ``tau_hat`` is recovered exactly in the noiseless case.
    Windows leaving ``1..n`` are clipped; an emptied left window falls back
    to ``tau-bn .. tau-1``.

    Returns
    -------
    gamma : (p,) array
    clipped : bool
        True when either window was shortened.
    """
    Y = _values(panel)
    n = Y.shape[0]
    if not 1 <= tau_hat <= n:
        raise ConfigError(f"tau_hat={tau_hat} outside 1..{n}")
    lo_l, hi_l = tau_hat - 2 * bn, tau_hat - bn - 1
    lo_r, hi_r = tau_hat + bn - 1, tau_hat + 2 * bn - 2
    clipped = lo_l < 1 or hi_r > n
    lo_l, hi_r = max(lo_l, 1), min(hi_r, n)
    if hi_l < lo_l:
        lo_l, hi_l = max(1, tau_hat - bn), tau_hat - 1
    if lo_r > hi_r:
        lo_r, hi_r = tau_hat, min(n, tau_hat + bn - 1)
    if hi_l < lo_l or hi_r < lo_r:
        raise ConfigError(f"no data on one side of tau_hat={tau_hat}")
    gamma = Y[lo_r - 1 : hi_r].mean(axis=0) - Y[lo_l - 1 : hi_l].mean(axis=0)
    return gamma, clipped


def _sigma(lrv, p: int) -> np.ndarray:
    if lrv is None:
        return np.ones(p)
    return lrv.sigma_diag if isinstance(lrv, LongRunEstimate) else np.asarray(lrv, float)


def detect_global(
    panel,
    bn: int,
    lrv: LongRunEstimate | np.ndarray | None,
    omega: float,
    centering_mode: str = "asymptotic",
    err_model: CenteringModel | None = None,
    exclusion: str = "closed",
) -> DetectionResult:
    """Multiple change-point detection with the global statistic.

    Parameters
    ----------
    panel : Panel or (n, p) array
    bn : int
    lrv : LongRunEstimate, (p,) array or None
        Long-run standard deviations (unit when ``None``).
    omega : float
        Threshold.
    centering_mode, err_model
        See :func:`hdmosum.mosum.centering`.
    exclusion : {"closed", "open"}
        Centres removed after each peak: ``|t - tau| <= 2 bn`` (closed) or
        ``|t - tau| < 2 bn`` (open). The open rule keeps a second break
        that sits exactly ``2 bn`` away.
    """
    if exclusion not in ("closed", "open"):
        raise ConfigError(f"exclusion must be 'closed' or 'open', got {exclusion!r}")
    Y = _values(panel)
    prof = jump_profile(Y, bn, lrv, centering_mode, err_model)
    st = stat_global(prof)
    result = DetectionResult("global", [], None, float(omega), st.max_value)
    if st.max_value < omega:
        return result
    vals = np.where(st.values > omega, st.values, -np.inf)
    alive = np.isfinite(vals)
    radius = 2 * bn if exclusion == "closed" else 2 * bn - 1
    sigma = _sigma(lrv, Y.shape[1])
    while alive.any():
        r = int(np.argmax(np.where(alive, vals, -np.inf)))
        tau = int(st.times[r])
        gamma, clipped = estimate_jump(Y, tau, bn)
        result.breaks.append(Break(tau, None, gamma, float(st.values[r]), clipped))
        if clipped:
            result.warnings.append(f"jump window clipped at data edge for tau={tau}")
        alive &= np.abs(st.times - tau) > radius
    result.delta_hat = _delta(result.breaks, sigma, prof.center_global)
    return result


def _delta(breaks: list[Break], sigma: np.ndarray, center: float) -> float | None:
    if not breaks:
        return None
    return min(math.sqrt(abs(float(np.sum((b.gamma / sigma) ** 2)) - center)) for b in breaks)


def detect_twoway(
    panel,
    bn: int,
    lrv: LongRunEstimate | np.ndarray | None,
    nbhds: NeighborhoodSet,
    omega: float,
    centering_mode: str = "asymptotic",
    err_model: CenteringModel | None = None,
) -> DetectionResult:
    """Multiple change-point detection with the Two-Way statistic.

    Returns breaks as ``(tau, s)`` pairs with ``s`` a neighborhood id. The
    result carries ``separation_ok`` from
    :func:`hdmosum.neighborhoods.check_separation` on the detected pairs;
    a violation is also listed in ``warnings``.
    """
    Y = _values(panel)
    n, p = Y.shape
    prof = jump_profile(Y, bn, lrv, centering_mode, err_model)
    st = stat_twoway(prof, nbhds)
    result = DetectionResult("twoway", [], None, float(omega), st.max_value)
    if st.max_value < omega:
        result.separation_ok = True
        return result
    vals = st.values
    alive = vals > omega
    times = st.times
    sigma = _sigma(lrv, p)
    c_nbhd = prof.center_nbhd(nbhds)
    local = []
    while alive.any():
        r, k = np.unravel_index(int(np.argmax(np.where(alive, vals, -np.inf))), vals.shape)
        tau, sid = int(times[r]), nbhds.ids[k]
        gamma, clipped = estimate_jump(Y, tau, bn)
        result.breaks.append(Break(tau, sid, gamma, float(vals[r, k]), clipped))
        if clipped:
            result.warnings.append(f"jump window clipped at data edge for tau={tau}")
        members = list(nbhds.neighborhoods[k].members)
        local.append(abs(float(np.sum((gamma[members] / sigma[members]) ** 2)) - c_nbhd[k]))
        # shared window centres i must lie in both influence ranges and in bn+1..n-bn
        lo = np.maximum(np.maximum(times, tau) - bn + 1, bn + 1)
        hi = np.minimum(np.minimum(times, tau) + bn, n - bn)
        linked_t = lo <= hi
        linked_s = nbhds.reachable(k)
        alive &= ~(linked_t[:, None] & linked_s[None, :])
    result.delta_hat = _delta(result.breaks, sigma, prof.center_global)
    result.delta_hat_local = math.sqrt(min(local))
    result.separation_ok = check_separation([(b.tau, b.s) for b in result.breaks], bn, nbhds, n)
    if not result.separation_ok:
        result.warnings.append("detected breaks violate the temporal-spatial separation condition")
    return result
