"""Robust long-run covariance estimation in the presence of mean shifts.

The panel is cut into blocks of length ``m``. Differences of consecutive
block means cancel a piecewise-constant trend except at the few blocks
that straddle a break; a Catoni-type M-estimator then downweights those
contaminated block products.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataValidationError, NumericalError
from .panel import Panel

__all__ = [
    "LongRunEstimate",
    "phi",
    "phi_alpha",
    "block_var_samples",
    "solve_h_zero",
    "solve_h_zero_batch",
    "default_block_size",
    "estimate_lrv",
    "known_lrv",
    "load_known_lrv",
]

LOG2 = math.log(2.0)
FLOOR_REL = 1e-8


def phi(x):
    """Bounded, odd, nondecreasing influence function.

    ``log(1 + x + x^2/2)`` on ``[-1, 0)``, ``-log(1 - x + x^2/2)`` on
    ``[0, 1)`` and ``+-log 2`` beyond. Clipping to ``[-1, 1]`` before the
    polynomial branches reproduces the constant tails exactly.

    Examples
    --------
    >>> float(phi(2.0)) == math.log(2)
    True
    """
    x = np.asarray(x, dtype=float)
    c = np.clip(x, -1.0, 1.0)
    pos = -np.log1p(-c + 0.5 * c * c)
    neg = np.log1p(c + 0.5 * c * c)
    out = np.where(c >= 0, pos, neg)
    return out if out.ndim else float(out)


def phi_alpha(x, alpha):
    """Rescaled influence function ``phi(alpha * x) / alpha``."""
    return phi(np.asarray(alpha) * x) / alpha


def default_block_size(n: int, p: int) -> int:
    """``sqrt(n / log(n p))`` rounded to the nearest integer, at least 2."""
    if n * p <= 1:
        return 2
    return max(2, int(round(math.sqrt(n / math.log(n * p)))))


def _block_means(values: np.ndarray, m: int) -> np.ndarray:
    n = values.shape[0]
    if m < 2:
        raise ConfigError(f"block size m must be >= 2, got {m}")
    n_blocks = n // m  # blocks 0..N0 with N0 = n//m - 1
    if n_blocks - 1 < 2:
        raise ConfigError(
            f"n={n} too short for block size m={m}: need n >= 3m to form two differences"
        )
    return values[: n_blocks * m].reshape(n_blocks, m, -1).mean(axis=1)


def block_var_samples(values, m: int, full: bool = True) -> np.ndarray:
    """Per-block long-run covariance samples.

    ``sigma2[k, i, j] = (m/2) (psi[k, i] - psi[k-1, i]) (psi[k, j] - psi[k-1, j])``
    for ``k = 1..N0``, where ``psi[k]`` is the mean of rows ``k*m .. (k+1)*m - 1``
    (0-based) and ``N0 = n // m - 1``.

    Parameters
    ----------
    values : (n, p) array or Panel
    m : int
        Block length, ``>= 2``.
    full : bool
        Return the ``(N0, p, p)`` array of all pairs; otherwise only the
        ``(N0, p)`` diagonal.
    """
    if isinstance(values, Panel):
        values = values.values
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    d = np.diff(_block_means(values, m), axis=0)
    if full:
        return 0.5 * m * d[:, :, None] * d[:, None, :]
    return 0.5 * m * d * d


def _h(samples: np.ndarray, u: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    return phi(alpha * (samples - u)).mean(axis=0) / alpha


def solve_h_zero_batch(samples, alpha, rtol: float = 1e-10, max_iter: int = 400) -> np.ndarray:
    """Solve ``mean_k phi_alpha(samples[k, c] - u) = 0`` for every column ``c``.

    ``h`` is nonincreasing in ``u``. Two bisections locate the left end of
    ``{h <= 0}`` and the right end of ``{h >= 0}``; the midpoint of the two
    is returned, which is the centre of any flat zero interval.

    Parameters
    ----------
    samples : (N0, K) array
    alpha : float or (K,) array, positive
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ConfigError("need at least one sample")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape[1:]).copy()
    if not (alpha > 0).all():
        raise ConfigError("alpha must be positive")
    lo0 = x.min(axis=0) - LOG2 / alpha
    hi0 = x.max(axis=0) + LOG2 / alpha
    if not (_h(x, lo0, alpha) > 0).all() or not (_h(x, hi0, alpha) < 0).all():
        bad = np.flatnonzero(~((_h(x, lo0, alpha) > 0) & (_h(x, hi0, alpha) < 0)))
        raise NumericalError(f"no sign change in the bracket for column(s) {bad[:5].tolist()}")

    # h is a mean of terms bounded by log2 / alpha; values within rounding
    # of zero count as zero so flat zero intervals are detected
    tol = 16 * np.finfo(float).eps * LOG2 / alpha

    def edge(strict_positive: bool) -> np.ndarray:
        lo, hi = lo0.copy(), hi0.copy()
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            hm = _h(x, mid, alpha)
            go_right = hm > tol if strict_positive else hm >= -tol
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
            if (hi - lo <= rtol * (1.0 + np.abs(mid))).all():
                break
        else:
            raise NumericalError("bisection did not converge")
        return 0.5 * (lo + hi)

    return 0.5 * (edge(True) + edge(False))


def solve_h_zero(samples, alpha: float, rtol: float = 1e-10) -> float:
    """Root of ``u -> mean_k phi_alpha(samples[k] - u)``; see :func:`solve_h_zero_batch`.

    >>> solve_h_zero([1.0, 2.0, 3.0], 0.1)
    2.0
    """
    x = np.asarray(samples, dtype=float).ravel()
    return float(solve_h_zero_batch(x[:, None], alpha, rtol)[0])


@dataclass(frozen=True, eq=False)
class LongRunEstimate:
    """Long-run scale of each series and, optionally, the full covariance.

    Attributes
    ----------
    sigma_diag : (p,) array
        Long-run standard deviations (the diagonal of ``Lambda``).
    sigma_full : (p, p) array or None
        Long-run covariance matrix.
    corr : (p, p) array or None
        Long-run correlations, unit diagonal, clipped to ``[-1, 1]``.
    block_size, n_blocks : int
        ``m`` and ``N0``; both 0 for a user-supplied scale.
    """

    sigma_diag: np.ndarray
    sigma_full: np.ndarray | None = None
    corr: np.ndarray | None = None
    block_size: int = 0
    n_blocks: int = 0

    def __post_init__(self):
        sd = np.array(self.sigma_diag, dtype=float).ravel()
        if sd.size == 0 or not np.isfinite(sd).all() or (sd <= 0).any():
            raise DataValidationError("long-run standard deviations must be finite and positive")
        sd.setflags(write=False)
        object.__setattr__(self, "sigma_diag", sd)
        for name in ("sigma_full", "corr"):
            a = getattr(self, name)
            if a is not None:
                a = np.array(a, dtype=float)
                if a.shape != (sd.size, sd.size):
                    raise DataValidationError(f"{name} must be {sd.size}x{sd.size}")
                if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
                    raise DataValidationError(f"{name} must be symmetric")
                a.setflags(write=False)
                object.__setattr__(self, name, a)

    @property
    def p(self) -> int:
        return self.sigma_diag.size

    def to_dict(self) -> dict:
        d = {
            "sigma_diag": self.sigma_diag.tolist(),
            "m": self.block_size,
            "n_blocks": self.n_blocks,
        }
        if self.sigma_full is not None:
            d["sigma_full"] = self.sigma_full.tolist()
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "LongRunEstimate":
        full = d.get("sigma_full")
        corr = None
        if full is not None:
            full = np.asarray(full, dtype=float)
            corr = _corr_from_cov(full, np.asarray(d["sigma_diag"], dtype=float))
        return cls(d["sigma_diag"], full, corr, int(d.get("m", 0)), int(d.get("n_blocks", 0)))


def _corr_from_cov(cov: np.ndarray, sd: np.ndarray) -> np.ndarray:
    corr = np.clip(cov / np.outer(sd, sd), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def known_lrv(sigma_diag) -> LongRunEstimate:
    """Wrap user-supplied long-run standard deviations."""
    return LongRunEstimate(np.asarray(sigma_diag, dtype=float))


def load_known_lrv(path: str | Path, p: int | None = None) -> LongRunEstimate:
    """Read a JSON array of ``p`` positive long-run standard deviations."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict):
        data = data.get("sigma_diag")
    if not isinstance(data, list):
        raise DataValidationError(f"{path}: expected a JSON array of positive reals")
    est = known_lrv(data)
    if p is not None and est.p != p:
        raise DataValidationError(f"{path}: {est.p} scales given for {p} series")
    return est


def _floor(values: np.ndarray) -> np.ndarray:
    """Per-series variance floor ``1e-8 * sample variance`` with fallbacks."""
    v = values.var(axis=0)
    overall = values.var()
    fallback = FLOOR_REL * overall if overall > 0 else np.finfo(float).tiny
    return np.where(v > 0, FLOOR_REL * v, fallback)


def estimate_lrv(
    panel,
    m: int | None = None,
    full: bool = False,
    chunk: int = 4096,
    pilot: str = "sorted",
) -> LongRunEstimate:
    """Robust block M-estimate of the long-run covariance.

    Parameters
    ----------
    panel : Panel or (n, p) array
    m : int, optional
        Block length; defaults to :func:`default_block_size`.
    full : bool
        Also estimate the off-diagonal covariances and correlations.
    chunk : int
        Number of off-diagonal pairs solved per vectorized batch.
    pilot : {"sorted", "index"}
        How the pilot scale picks its middle half of block samples: the
        middle order statistics (default, unaffected by a few break
        blocks) or the middle blocks in time.

    Notes
    -----
    The tuning constant of pair ``(i, j)`` is
    ``alpha = sqrt(m / n) / (sbar_i * sbar_j)`` with
    ``sbar_i^2 = (2 / N0) * sum_{N0/4 <= k <= 3 N0/4} sigma2[(k), i, i]``.
    Dividing by the pilot scales makes the estimate scale-equivariant.
    """
    if pilot not in ("sorted", "index"):
        raise ConfigError(f"pilot must be 'sorted' or 'index', got {pilot!r}")
    values = panel.values if isinstance(panel, Panel) else np.asarray(panel, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, p = values.shape
    m = default_block_size(n, p) if m is None else int(m)
    diag = block_var_samples(values, m, full=False)
    n0 = diag.shape[0]
    if n0 < 8:
        raise ConfigError(f"only {n0} block differences for n={n}, m={m}; need at least 8")
    floor = _floor(values)

    k = np.arange(1, n0 + 1)
    mid = (4 * k >= n0) & (4 * k <= 3 * n0)
    ranked = np.sort(diag, axis=0) if pilot == "sorted" else diag
    sbar2 = np.maximum(2.0 * ranked[mid].sum(axis=0) / n0, floor)
    sbar = np.sqrt(sbar2)
    scale = math.sqrt(m / n)

    var = solve_h_zero_batch(diag, scale / sbar2)
    if not np.isfinite(var).all():
        j = int(np.flatnonzero(~np.isfinite(var))[0])
        raise NumericalError(f"non-finite long-run variance for series ({j}, {j})")
    var = np.maximum(var, floor)
    sd = np.sqrt(var)
    if not full:
        return LongRunEstimate(sd, None, None, m, n0)

    d = np.diff(_block_means(values, m), axis=0)
    iu, ju = np.triu_indices(p, k=1)
    cov = np.diag(var)
    for start in range(0, iu.size, chunk):
        a, b = iu[start : start + chunk], ju[start : start + chunk]
        samples = 0.5 * m * d[:, a] * d[:, b]
        roots = solve_h_zero_batch(samples, scale / (sbar[a] * sbar[b]))
        if not np.isfinite(roots).all():
            r = int(np.flatnonzero(~np.isfinite(roots))[0])
            raise NumericalError(f"non-finite long-run covariance for pair ({a[r]}, {b[r]})")
        cov[a, b] = roots
        cov[b, a] = roots
    return LongRunEstimate(sd, cov, _corr_from_cov(cov, sd), m, n0)
