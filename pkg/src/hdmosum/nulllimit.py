"""Gaussian limit of the centered statistics and Monte-Carlo thresholds.

Every covariance here has the form

    Xi = sum_t  Omega_t  kron  T_t

where ``Omega_t`` is an ``S x S`` spatial matrix and ``T_t`` is a symmetric
Toeplitz matrix over the ``n - 2 bn`` window centres whose lag profile
vanishes from lag ``2 bn`` on. The stacked index is neighborhood-major:
entry ``s * n_eff + r`` belongs to neighborhood position ``s`` and window
centre ``i = bn + 1 + r``. The global statistic is the case ``S = 1``.

Draws of the maximum use the factor form ``Z = L_T xi F^T`` (``L_T L_T^T = T``,
``F F^T = Omega``) whenever a single term is present, so the dense matrix
is never built.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from .exceptions import ConfigError, DataValidationError, NumericalError
from .neighborhoods import NeighborhoodSet

__all__ = [
    "g",
    "kernel_printed_parts",
    "dependent_kernel",
    "LimitCovariance",
    "cov_global",
    "cov_twoway",
    "cov_dependent",
    "sample_max",
    "threshold",
    "ThresholdResult",
    "BLOCK_REPS",
]

# replicates per RNG substream; fixed so results never depend on threading
BLOCK_REPS = 128
_TAG_SAMPLE_MAX = 0x6D6178  # "max"


def g(zeta):
    """Null covariance profile of squared jump estimates.

    ``18 z^2 - 24 z + 8`` on ``[0, 1)``, ``2 z^2 - 8 z + 8`` on ``[1, 2)``,
    zero from 2 on.

    >>> g(0.0), g(1.0), g(2.0)
    (8.0, 2.0, 0.0)
    """
    z = np.asarray(zeta, dtype=float)
    if (z < 0).any() or np.isnan(z).any():
        raise ConfigError("g is defined for zeta >= 0 only")
    out = np.where(
        z < 1, 18 * z * z - 24 * z + 8, np.where(z < 2, 2 * z * z - 8 * z + 8, 0.0)
    )
    return out if out.ndim else float(out)


def kernel_printed_parts(zeta):
    """Coefficient polynomials of the printed dependent kernel.

    The printed kernel for a pair of series with long-run correlation
    ``rho`` reads ``A(z) rho^2 + B(z)`` with

    * ``A = 15 z^2 - 20 z + 8`` and ``B = 3 z^2 - 4 z`` on ``(0, 1]``
    * ``A = 3 z^2 - 12 z + 12`` and ``B = -z^2 + 4 z - 4`` on ``(1, 2]``
    * zero beyond 2.

    ``A + B = g``, so ``rho = 1`` reproduces the independent kernel; at
    ``z = 0`` the right limit is used.
    """
    z = np.asarray(zeta, dtype=float)
    if (z < 0).any():
        raise ConfigError("zeta must be nonnegative")
    first = z <= 1
    second = (z > 1) & (z <= 2)
    A = np.where(first, 15 * z * z - 20 * z + 8, np.where(second, 3 * z * z - 12 * z + 12, 0.0))
    B = np.where(first, 3 * z * z - 4 * z, np.where(second, -z * z + 4 * z - 4, 0.0))
    return A, B


def dependent_kernel(zeta, rho, kernel: str = "gaussian"):
    """Pair kernel for series with long-run correlation ``rho``.

    ``gaussian`` is ``rho^2 g(z)``, the covariance of squared jointly
    Gaussian jump estimates. ``printed`` is ``A(z) rho^2 + B(z)`` from
    :func:`kernel_printed_parts`.
    """
    rho = np.asarray(rho, dtype=float)
    if kernel == "gaussian":
        return rho * rho * g(zeta)
    if kernel == "printed":
        A, B = kernel_printed_parts(zeta)
        return A * rho * rho + B
    raise ConfigError(f"unknown kernel {kernel!r}")


def _lags(bn: int, n_eff: int, f) -> np.ndarray:
    """Lag profile ``f(h / bn) / bn^2`` for ``h = 0 .. min(2 bn, n_eff) - 1``."""
    h = np.arange(min(2 * bn, n_eff))
    return np.asarray(f(h / bn), dtype=float) / bn**2


@dataclass(eq=False)
class LimitCovariance:
    """Covariance of the limiting Gaussian vector as a sum of Kronecker terms.

    Attributes
    ----------
    mode : {"global", "twoway", "dependent"}
    n_eff, bn : int
    terms : list of (Omega, lags)
        ``Omega`` is ``S x S``; ``lags[h]`` is the Toeplitz entry at lag ``h``
        (lags beyond ``len(lags)`` are zero).
    nbhd_ids : list of int or None
    spatial_factor : optional
        ``F`` with ``F F^T = Omega`` for single-term kernels, when it is
        cheaper than factoring ``Omega`` itself.
    """

    mode: str
    n_eff: int
    bn: int
    terms: list[tuple[np.ndarray, np.ndarray]]
    nbhd_ids: list[int] | None = None
    spatial_factor: object = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def S(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def dim(self) -> int:
        return self.S * self.n_eff

    def toeplitz(self, lags: np.ndarray) -> np.ndarray:
        col = np.zeros(self.n_eff)
        col[: lags.size] = lags
        return linalg.toeplitz(col)

    def entry(self, r: int, s: int, r2: int, s2: int) -> float:
        """Covariance between (row ``r``, position ``s``) and (``r2``, ``s2``); 0-based."""
        h = abs(r - r2)
        return float(sum(Om[s, s2] * lg[h] for Om, lg in self.terms if h < lg.size))

    def dense(self) -> np.ndarray:
        """Full ``(S n_eff) x (S n_eff)`` matrix, neighborhood-major."""
        return sum(np.kron(Om, self.toeplitz(lg)) for Om, lg in self.terms)

    def to_banded_csv(self, path: str | Path) -> None:
        """Rows ``(s, s2, lag, value)`` for every nonzero lag, ids 1-based."""
        ids = self.nbhd_ids or [1]
        L = max(lg.size for _, lg in self.terms)
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "s2", "lag", "value"])
            for a in range(self.S):
                for b in range(self.S):
                    for h in range(L):
                        v = self.entry(0, a, h, b) if h < self.n_eff else 0.0
                        w.writerow([ids[a], ids[b], h, repr(v)])

    def factors(self):
        """Cached factors used by :func:`sample_max`.

        Returns ``("kron", L_T, F)`` for a single term or ``("dense", F)``.
        """
        if "f" not in self._cache:
            if len(self.terms) == 1:
                Om, lg = self.terms[0]
                L_T = _psd_factor(self.toeplitz(lg), "temporal kernel")
                F = self.spatial_factor
                if F is None:
                    F = _psd_factor(Om, "spatial kernel")
                self._cache["f"] = ("kron", L_T, F)
            else:
                self._cache["f"] = ("dense", _psd_factor(self.dense(), "covariance"))
        return self._cache["f"]


def _psd_factor(A: np.ndarray, what: str) -> np.ndarray:
    """``F`` with ``F F^T ~= A``: Cholesky, then jittered Cholesky, then clipped eigh."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return A.copy()
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NumericalError(f"{what} is not symmetric")
    if not np.any(A):
        return np.zeros_like(A)
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = 1e-10 * max(np.mean(np.diag(A)), np.finfo(float).tiny)
    try:
        return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
    except linalg.LinAlgError:
        pass
    try:
        w, U = linalg.eigh(A)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: eigendecomposition failed ({exc})") from None
    scale = max(abs(np.trace(A)) / A.shape[0], np.finfo(float).tiny)
    if w.min() < -1e-6 * scale:
        raise NumericalError(
            f"{what} is far from positive semidefinite: min eigenvalue {w.min():.3e}, "
            f"trace/dim {scale:.3e}, condition {w.max() / max(abs(w).min(), 1e-300):.3e}"
        )
    return U * np.sqrt(np.clip(w, 0.0, None))


def cov_global(n: int, bn: int, p: int) -> LimitCovariance:
    """``Xi[i, i'] = p g(|i - i'| / bn) / bn^2`` over ``n - 2 bn`` centres."""
    n_eff = n - 2 * bn
    if n_eff < 1 or bn < 1:
        raise ConfigError(f"need bn >= 1 and n - 2 bn >= 1, got n={n}, bn={bn}")
    if p < 0:
        raise ConfigError("p must be nonnegative")
    Om = np.array([[float(p)]])
    return LimitCovariance("global", n_eff, bn, [(Om, _lags(bn, n_eff, g))], None,
                           np.array([[math.sqrt(p)]]))


def _normalized_membership(nbhds: NeighborhoodSet):
    return nbhds.membership().multiply(1.0 / np.sqrt(nbhds.sizes)[:, None]).tocsr()


def cov_twoway(n: int, bn: int, nbhds: NeighborhoodSet) -> LimitCovariance:
    """``Xi[(i,s), (i',s')] = |L_s ∩ L_s'| / sqrt(|L_s| |L_s'|) * g(|i-i'|/bn) / bn^2``."""
    n_eff = n - 2 * bn
    if n_eff < 1 or bn < 1:
        raise ConfigError(f"need bn >= 1 and n - 2 bn >= 1, got n={n}, bn={bn}")
    Mt = _normalized_membership(nbhds)
    Om = (Mt @ Mt.T).toarray()
    # Omega = Mt Mt^T, so Mt is an exact spatial factor when it is narrower
    F = None if nbhds.S <= nbhds.p else Mt
    return LimitCovariance("twoway", n_eff, bn, [(Om, _lags(bn, n_eff, g))], nbhds.ids, F)


def _check_corr(corr: np.ndarray, p: int) -> np.ndarray:
    R = np.asarray(corr, dtype=float)
    if R.shape != (p, p):
        raise DataValidationError(f"correlation matrix must be {p}x{p}, got {R.shape}")
    if not np.isfinite(R).all():
        raise DataValidationError("correlation matrix has non-finite entries")
    if not np.allclose(R, R.T, rtol=0, atol=1e-12):
        raise DataValidationError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(R), 1.0, rtol=0, atol=1e-12):
        raise DataValidationError("correlation matrix must have unit diagonal")
    if (np.abs(R) > 1 + 1e-12).any():
        raise DataValidationError("correlations must lie in [-1, 1]")
    return np.clip(R, -1.0, 1.0)


def cov_dependent(
    n: int,
    bn: int,
    nbhds: NeighborhoodSet | None,
    corr,
    kernel: str = "gaussian",
    cutoff: float = 0.0,
) -> LimitCovariance:
    """Limit covariance under cross-sectional dependence.

    Parameters
    ----------
    n, bn : int
    nbhds : NeighborhoodSet or None
        ``None`` gives the global statistic (one neighborhood of all ``p``
        series, without the ``1/sqrt(p)`` normalization).
    corr : (p, p) array
        Long-run correlation matrix.
    kernel : {"gaussian", "printed"}
        Pair kernel, see :func:`dependent_kernel`. ``gaussian`` equals the
        independent kernel when ``corr`` is the identity.
    cutoff : float
        Correlations with ``|rho| < cutoff`` are treated as 0 (off-diagonal only).
    """
    n_eff = n - 2 * bn
    if n_eff < 1 or bn < 1:
        raise ConfigError(f"need bn >= 1 and n - 2 bn >= 1, got n={n}, bn={bn}")
    p = np.asarray(corr).shape[0]
    R = _check_corr(corr, p)
    if cutoff > 0:
        R = np.where((np.abs(R) < cutoff) & ~np.eye(p, dtype=bool), 0.0, R)
    if nbhds is None:
        Mt = np.ones((1, p))
        ids = None
    else:
        if nbhds.p != p:
            raise DataValidationError(f"neighborhoods cover {nbhds.p} series, corr has {p}")
        Mt = _normalized_membership(nbhds).toarray()
        ids = nbhds.ids
    R2 = R * R
    Om_R = Mt @ R2 @ Mt.T
    if kernel == "gaussian":
        return LimitCovariance("dependent", n_eff, bn, [(Om_R, _lags(bn, n_eff, g))], ids)
    if kernel == "printed":
        u = Mt.sum(axis=1)
        terms = [
            (Om_R, _lags(bn, n_eff, lambda z: kernel_printed_parts(z)[0])),
            (np.outer(u, u), _lags(bn, n_eff, lambda z: kernel_printed_parts(z)[1])),
        ]
        return LimitCovariance("dependent", n_eff, bn, terms, ids)
    raise ConfigError(f"unknown kernel {kernel!r}")


def _block_max(cov: LimitCovariance, nrep: int, rng: np.random.Generator) -> np.ndarray:
    f = cov.factors()
    if f[0] == "kron":
        _, L_T, F = f
        q = F.shape[1]
        xi = rng.standard_normal((nrep, cov.n_eff, q))
        tmp = np.matmul(L_T, xi)  # (nrep, n_eff, q)
        if hasattr(F, "toarray"):
            Z = (F @ tmp.reshape(-1, q).T).T.reshape(nrep, cov.n_eff, -1)
        else:
            Z = tmp @ F.T
        return Z.reshape(nrep, -1).max(axis=1)
    F = f[1]
    xi = rng.standard_normal((nrep, F.shape[1]))
    return (xi @ F.T).max(axis=1)


def sample_max(
    cov: LimitCovariance,
    reps: int,
    seed: int,
    threads: int = 1,
) -> np.ndarray:
    """``reps`` independent draws of ``max_k Z_k`` with ``Z ~ N(0, cov)``.

    Replicates are generated in fixed blocks of :data:`BLOCK_REPS`, block
    ``b`` drawing from the substream ``SeedSequence([seed, tag, b])``. The
    output is therefore identical for any ``threads``.
    """
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    cov.factors()  # factor once, before any worker touches the cache
    nblocks = -(-reps // BLOCK_REPS)

    def run(b: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_SAMPLE_MAX, b]))
        return _block_max(cov, min(BLOCK_REPS, reps - b * BLOCK_REPS), rng)

    if threads == 1 or nblocks == 1:
        parts = [run(b) for b in range(nblocks)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, range(nblocks)))
    return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class ThresholdResult:
    """Empirical ``(1 - alpha)`` exceedance threshold of simulated maxima."""

    alpha: float
    omega: float
    reps: int
    seed: int | None
    quantiles: dict[str, float]
    samples: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "omega": self.omega,
            "reps": self.reps,
            "seed": self.seed,
            "quantiles": self.quantiles,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdResult":
        return cls(float(d["alpha"]), float(d["omega"]), int(d["reps"]), d.get("seed"),
                   {str(k): float(v) for k, v in d.get("quantiles", {}).items()})


def threshold(samples, alpha: float, seed: int | None = None) -> ThresholdResult:
    """Smallest sample value ``r`` with ``#{x > r} / N <= alpha``.

    >>> threshold(np.arange(1, 101), 0.05).omega
    95.0
    """
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise ConfigError("threshold needs at least one sample")
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not np.isfinite(x).all():
        raise DataValidationError("samples contain non-finite values")
    N = x.size
    greater = N - np.searchsorted(x, x, side="right")
    ok = greater <= alpha * N * (1 + 1e-12)
    omega = float(x[np.argmax(ok)])  # ok[-1] is always true
    qs = {str(q): float(np.quantile(x, q / 100)) for q in (50, 90, 95, 99)}
    return ThresholdResult(float(alpha), omega, N, seed, qs, x)
