"""Data-generating processes and the simulation harness.

Error models
------------
``iid``
    ``eps[t, j] = eta[t, j]``.
``ar1``
    ``eps[t, j] = phi_j eps[t-1, j] + eta[t, j]``, ``phi_j ~ U(0.6, 0.9)``.
``ma_inf``
    ``eps[t, j] = sum_{k=0}^{T-1} psi_j (k+1)^{-beta} eta[t-k, j]`` with
    ``psi_j ~ U(0.5, 0.9)`` and ``T = 300``.

Innovations are standard normal or Student-t rescaled to unit variance.
Coefficients are redrawn for every replicate unless frozen via
``ErrorModel.coeffs``.

Reproducibility
---------------
Replicate ``r`` of an experiment draws from
``SeedSequence([seed, tag, r])``, and Monte-Carlo thresholds use their own
tagged substreams. Reports are therefore bit-identical for any number of
worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import signal

from .detect import detect_global, detect_twoway
from .exceptions import ConfigError
from .lrv import estimate_lrv
from .mosum import jump_profile, stat_global, stat_twoway
from .neighborhoods import NeighborhoodSet, from_intervals
from .nulllimit import cov_global, cov_twoway, sample_max, threshold
from .panel import Panel

__all__ = [
    "ErrorModel",
    "RealizedModel",
    "BreakSpec",
    "BreakPlan",
    "ExperimentConfig",
    "ExperimentReport",
    "gen_errors",
    "inject_breaks",
    "grouping_intervals",
    "five_group_intervals",
    "run_size_experiment",
    "run_power_experiment",
    "run_consistency_experiment",
]

_TAG_ERRORS = 11
_TAG_REPLICATE = 23
_TAG_THRESHOLD = 37
_TAG_LINF = 41


def _substream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, int(index)]))


# ---------------------------------------------------------------------------
# error models


@dataclass(frozen=True)
class ErrorModel:
    """Specification of the noise process.

    Parameters
    ----------
    kind : {"iid", "ar1", "ma_inf"}
    tail : {"gaussian", "student"}
    df : float
        Student-t degrees of freedom (> 4).
    phi_range, psi_range : (float, float)
        Uniform ranges of the AR and MA amplitudes.
    beta : float
        MA decay exponent (> 1/2).
    T : int
        MA truncation.
    coeffs : sequence of float, optional
        Frozen per-series ``phi_j`` or ``psi_j``; length must equal ``p``.
    cross_theta : float
        Experimental cross-sectional dependence: innovations are replaced by
        ``(eta[:, j] + theta eta[:, j+1]) / sqrt(1 + theta^2)``.
    burn_in : int
        AR(1) warm-up steps after a stationary Gaussian start.
    """

    kind: str = "iid"
    tail: str = "gaussian"
    df: float = 9.0
    phi_range: tuple[float, float] = (0.6, 0.9)
    psi_range: tuple[float, float] = (0.5, 0.9)
    beta: float = 2.0
    T: int = 300
    coeffs: tuple[float, ...] | None = None
    cross_theta: float = 0.0
    burn_in: int = 300

    def __post_init__(self):
        if self.kind not in ("iid", "ar1", "ma_inf"):
            raise ConfigError(f"unknown error model kind {self.kind!r}")
        if self.tail not in ("gaussian", "student"):
            raise ConfigError(f"unknown tail {self.tail!r}")
        if self.tail == "student" and not self.df > 4:
            raise ConfigError(f"student tails need df > 4, got {self.df}")
        if self.kind == "ma_inf" and (self.beta <= 0.5 or self.T < 1):
            raise ConfigError("ma_inf needs beta > 1/2 and T >= 1")
        lo, hi = self.phi_range
        if self.kind == "ar1" and not (-1 < lo <= hi < 1):
            raise ConfigError(f"AR coefficients must lie in (-1, 1), got {self.phi_range}")
        if self.coeffs is not None:
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
            if self.kind == "ar1" and any(abs(c) >= 1 for c in self.coeffs):
                raise ConfigError("frozen AR coefficients must satisfy |phi| < 1")
        object.__setattr__(self, "phi_range", tuple(self.phi_range))
        object.__setattr__(self, "psi_range", tuple(self.psi_range))

    @property
    def label(self) -> str:
        name = {"iid": "iid", "ar1": "AR(1)", "ma_inf": "MA(inf)"}[self.kind]
        tail = "N(0,1)" if self.tail == "gaussian" else f"t{self.df:g}"
        return f"{name} {tail}"

    def realize(self, rng: np.random.Generator, p: int) -> "RealizedModel":
        """Draw (or take frozen) per-series coefficients."""
        if self.kind == "iid":
            c = np.zeros(p)
        elif self.coeffs is not None:
            if len(self.coeffs) != p:
                raise ConfigError(f"{len(self.coeffs)} frozen coefficients for p={p}")
            c = np.array(self.coeffs)
        else:
            lo, hi = self.phi_range if self.kind == "ar1" else self.psi_range
            c = rng.uniform(lo, hi, size=p)
        return RealizedModel(self, c)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorModel":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class RealizedModel:
    """An :class:`ErrorModel` with concrete per-series coefficients."""

    model: ErrorModel
    coeffs: np.ndarray

    @property
    def p(self) -> int:
        return self.coeffs.size

    def ma_weights(self) -> np.ndarray:
        """``(T, p)`` MA weights ``psi_j (k+1)^{-beta}``."""
        k = np.arange(1, self.model.T + 1, dtype=float)
        return k[:, None] ** (-self.model.beta) * self.coeffs[None, :]

    def long_run_sd(self) -> np.ndarray:
        """Long-run standard deviation of each series (unit innovations)."""
        m = self.model
        if m.kind == "iid":
            return np.ones(self.p)
        if m.kind == "ar1":
            return 1.0 / (1.0 - self.coeffs)
        return self.ma_weights().sum(axis=0)

    def long_run_corr(self) -> np.ndarray:
        """Long-run correlation matrix; tridiagonal under ``cross_theta``."""
        th = self.model.cross_theta
        R = np.eye(self.p)
        if th and self.p > 1:
            r = th / (1.0 + th * th)
            idx = np.arange(self.p - 1)
            R[idx, idx + 1] = R[idx + 1, idx] = r
        return R

    def autocov(self, maxlag: int) -> np.ndarray:
        """``(maxlag + 1, p)`` autocovariances at lags ``0..maxlag``."""
        m = self.model
        h = np.arange(maxlag + 1)
        if m.kind == "iid":
            out = np.zeros((maxlag + 1, self.p))
            out[0] = 1.0
            return out
        if m.kind == "ar1":
            ph = self.coeffs
            return ph[None, :] ** h[:, None] / (1.0 - ph * ph)[None, :]
        a = self.ma_weights()
        out = np.zeros((maxlag + 1, self.p))
        for lag in range(min(maxlag, a.shape[0] - 1) + 1):
            out[lag] = (a[: a.shape[0] - lag] * a[lag:]).sum(axis=0)
        return out

    def center_terms(self, bn: int, p: int) -> np.ndarray:
        """Exact null ``Var(V[i, j])`` with ``V`` standardized by the long-run sd."""
        if p != self.p:
            raise ConfigError(f"model realized for p={self.p}, asked for p={p}")
        gam = self.autocov(2 * bn - 1)
        w = np.r_[-np.ones(bn), np.ones(bn)]
        c = np.correlate(w, w, mode="full")[2 * bn - 1 :]  # lags 0..2bn-1
        var_sum = gam[0] * c[0] + 2.0 * (c[1:, None] * gam[1:]).sum(axis=0)
        return var_sum / (bn * bn * self.long_run_sd() ** 2)

    def innovations(self, rng: np.random.Generator, n: int) -> np.ndarray:
        m = self.model
        extra = 1 if m.cross_theta else 0
        shape = (n, self.p + extra)
        if m.tail == "gaussian":
            eta = rng.standard_normal(shape)
        else:
            eta = rng.standard_t(m.df, shape) * math.sqrt((m.df - 2.0) / m.df)
        if m.cross_theta:
            th = m.cross_theta
            eta = (eta[:, :-1] + th * eta[:, 1:]) / math.sqrt(1.0 + th * th)
        return eta

    def generate(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw an ``(n, p)`` error matrix."""
        m = self.model
        if m.kind == "iid":
            return self.innovations(rng, n)
        if m.kind == "ar1":
            ph = self.coeffs
            eta = self.innovations(rng, n + m.burn_in)
            e = rng.standard_normal(self.p) / np.sqrt(1.0 - ph * ph)
            out = np.empty((n + m.burn_in, self.p))
            for t in range(n + m.burn_in):
                e = ph * e + eta[t]
                out[t] = e
            return out[m.burn_in :]
        a = self.ma_weights()
        eta = self.innovations(rng, n + m.T - 1)
        return signal.fftconvolve(eta, a, mode="valid", axes=0)


def gen_errors(model: ErrorModel, n: int, p: int, seed: int) -> np.ndarray:
    """Deterministic ``(n, p)`` error matrix for ``(model, seed)``."""
    rng = _substream(seed, _TAG_ERRORS)
    return model.realize(rng, p).generate(n, rng)


# ---------------------------------------------------------------------------
# breaks


@dataclass(frozen=True)
class BreakSpec:
    """Mean shift from time ``tau`` (1-based) onwards.

    ``members`` are 0-based columns (``None`` = all); ``jump`` is a scalar
    or one value per member.
    """

    tau: int
    jump: float | tuple[float, ...]
    members: tuple[int, ...] | None = None


@dataclass(frozen=True)
class BreakPlan:
    breaks: tuple[BreakSpec, ...] = ()

    @classmethod
    def single(cls, tau: int, jump: float, members=None) -> "BreakPlan":
        return cls((BreakSpec(tau, jump, None if members is None else tuple(members)),))

    @property
    def K(self) -> int:
        return len(self.breaks)

    @property
    def taus(self) -> list[int]:
        return [b.tau for b in self.breaks]


def inject_breaks(errors, mu0, plan: BreakPlan) -> Panel:
    """``Y[t, j] = mu0[j] + sum_k jump_k 1{t >= tau_k, j in members_k} + eps[t, j]``."""
    E = np.asarray(errors, dtype=float)
    n, p = E.shape
    Y = E + np.broadcast_to(np.asarray(mu0, dtype=float), (p,))[None, :]
    for b in plan.breaks:
        if not 1 <= b.tau <= n:
            raise ConfigError(f"break time {b.tau} outside 1..{n}")
        cols = np.arange(p) if b.members is None else np.asarray(b.members, dtype=int)
        if cols.size == 0 or cols.min() < 0 or cols.max() >= p:
            raise ConfigError(f"break at {b.tau} has invalid members")
        Y[b.tau - 1 :, cols] += np.asarray(b.jump, dtype=float)
    return Panel(Y)


# ---------------------------------------------------------------------------
# designs


def grouping_intervals(p: int, frac: float, S: int = 4) -> list[tuple[int, int]]:
    """``S`` equally spaced runs of ``round(frac p)`` series covering ``1..p``.

    Starts are ``1 + floor(k (p - size) / (S - 1))``.

    >>> grouping_intervals(30, 0.6)
    [(1, 18), (5, 22), (9, 26), (13, 30)]
    """
    size = int(round(frac * p))
    if not 1 <= size <= p:
        raise ConfigError(f"group size {size} invalid for p={p}")
    if S == 1:
        return [(1, size)]
    starts = [1 + (k * (p - size)) // (S - 1) for k in range(S)]
    return [(a, a + size - 1) for a in starts]


def five_group_intervals(p: int) -> list[tuple[int, int]]:
    """Five groups: ``2p(s-1)/10 + {1..0.3p}`` for ``s <= 4`` and ``0.7p+1..p``."""
    size = int(round(0.3 * p))
    out = [(2 * p * (s - 1) // 10 + 1, 2 * p * (s - 1) // 10 + size) for s in range(1, 5)]
    out.append((int(round(0.7 * p)) + 1, p))
    return out


# ---------------------------------------------------------------------------
# harness


@dataclass
class ExperimentConfig:
    """Configuration shared by the three experiment runners.

    Only the fields relevant to a runner are read. ``intervals`` are 1-based
    inclusive column ranges defining neighborhoods; ``breaks`` is a list of
    ``(tau, jump, group)`` with ``group`` a neighborhood id or ``None`` for
    all series.

    ``lrv`` picks the per-series scale: the model's analytic long-run sd
    (``known``), the robust estimate from each panel (``robust``) or 1
    (``unit``). ``calibration`` picks how thresholds are set: from the
    Gaussian limit (``limit``, default) or from the statistic on
    Gaussian-innovation panels of the same model (``panel``).
    """

    model: ErrorModel = field(default_factory=ErrorModel)
    n: int = 200
    p: int = 50
    bn: int = 30
    alpha: float = 0.05
    reps: int = 1000
    mc_reps: int = 1000
    seed: int = 0
    threads: int = 1
    lrv: str = "known"
    centering: str = "asymptotic"
    calibration: str = "limit"
    # power
    jumps: tuple[float, ...] = (1.0,)
    n_jump: tuple[int, ...] = ()
    tau: int | None = None
    detectors: tuple[str, ...] = ("l2", "linf")
    jump_group: int | None = None
    # consistency
    mode: str = "global"
    breaks: tuple[tuple[int, float, int | None], ...] = ()
    exclusion: str = "closed"
    intervals: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ErrorModel.from_dict(self.model)
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.reps < 1 or self.mc_reps < 1:
            raise ConfigError("reps and mc_reps must be positive")
        if self.lrv not in ("known", "robust", "unit"):
            raise ConfigError(f"lrv must be 'known', 'robust' or 'unit', got {self.lrv!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.calibration not in ("limit", "panel"):
            raise ConfigError(f"calibration must be 'limit' or 'panel', got {self.calibration!r}")
        self.jumps = tuple(float(x) for x in self.jumps)
        self.n_jump = tuple(int(x) for x in self.n_jump)
        self.detectors = tuple(self.detectors)
        self.breaks = tuple((int(t), float(j), None if g is None else int(g)) for t, j, g in self.breaks)
        self.intervals = tuple((int(a), int(b)) for a, b in self.intervals)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    def neighborhoods(self) -> NeighborhoodSet:
        if not self.intervals:
            raise ConfigError("this experiment needs neighborhood intervals")
        return from_intervals(self.p, self.intervals)


@dataclass(eq=False)
class ExperimentReport:
    """Metrics, per-row tables and the configuration that produced them."""

    kind: str
    metrics: dict
    table: list[dict]
    config: dict

    def to_dict(self) -> dict:
        return {"kind": self.kind, "metrics": self.metrics, "table": self.table, "config": self.config}

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        if self.table:
            w = csv.DictWriter(buf, fieldnames=list(self.table[0]))
            w.writeheader()
            w.writerows(self.table)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _map_reps(fn: Callable[[int], object], reps: int, threads: int) -> list:
    if threads == 1:
        return [fn(r) for r in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(reps)))


def _replicate(cfg: ExperimentConfig, r: int):
    rng = _substream(cfg.seed, _TAG_REPLICATE, r)
    real = cfg.model.realize(rng, cfg.p)
    return real, real.generate(cfg.n, rng)


def _scale(cfg: ExperimentConfig, real: RealizedModel, Y: np.ndarray) -> np.ndarray:
    if cfg.lrv == "unit":
        return np.ones(cfg.p)
    if cfg.lrv == "known":
        return real.long_run_sd()
    return estimate_lrv(Y).sigma_diag


def _omega_global(cfg: ExperimentConfig) -> float:
    if cfg.calibration == "panel":
        return _omega_panel(cfg, lambda prof: stat_global(prof).max_value, _TAG_THRESHOLD)
    draws = sample_max(cov_global(cfg.n, cfg.bn, cfg.p), cfg.mc_reps,
                       _seed_for(cfg.seed, _TAG_THRESHOLD), cfg.threads)
    return threshold(draws, cfg.alpha).omega


def _omega_twoway(cfg: ExperimentConfig, nb: NeighborhoodSet) -> float:
    if cfg.calibration == "panel":
        return _omega_panel(cfg, lambda prof: stat_twoway(prof, nb).max_value, _TAG_THRESHOLD + 1)
    draws = sample_max(cov_twoway(cfg.n, cfg.bn, nb), cfg.mc_reps,
                       _seed_for(cfg.seed, _TAG_THRESHOLD + 1), cfg.threads)
    return threshold(draws, cfg.alpha).omega


def _omega_panel(cfg: ExperimentConfig, stat, tag: int) -> float:
    """Threshold from the statistic itself on Gaussian-innovation null panels.

    The panels follow ``cfg.model`` with normal innovations and are scaled
    like the experiment (known or estimated long-run sd).
    """
    gauss = replace(cfg.model, tail="gaussian")

    def one(r):
        rng = _substream(cfg.seed, tag, r)
        real = gauss.realize(rng, cfg.p)
        E = real.generate(cfg.n, rng)
        prof = jump_profile(E, cfg.bn, _scale(cfg, real, E), cfg.centering, _centering_model(cfg, real))
        return stat(prof)

    draws = np.array(_map_reps(one, cfg.mc_reps, cfg.threads))
    return threshold(draws, cfg.alpha).omega


def _seed_for(seed: int, tag: int) -> int:
    """Derived integer seed for a tagged auxiliary stream."""
    return int(np.random.SeedSequence([int(seed), tag]).generate_state(1)[0])


def _linf_stat(Y: np.ndarray, bn: int, sigma: np.ndarray) -> float:
    V = jump_profile(Y, bn, sigma).V
    return float(np.abs(V).max())


def _omega_linf(cfg: ExperimentConfig) -> float:
    """Threshold of ``max |V|_inf`` from Gaussian iid panels with unit scale.

    Under ``calibration="panel"`` the panels follow the configured model
    instead, as for the other detectors.
    """
    if cfg.calibration == "panel":
        return _omega_panel(cfg, lambda prof: float(np.abs(prof.V).max()), _TAG_LINF)

    def one(r):
        rng = _substream(cfg.seed, _TAG_LINF, r)
        return _linf_stat(rng.standard_normal((cfg.n, cfg.p)), cfg.bn, np.ones(cfg.p))

    draws = np.array(_map_reps(one, cfg.mc_reps, cfg.threads))
    return threshold(draws, cfg.alpha).omega


def _centering_model(cfg: ExperimentConfig, real: RealizedModel):
    return real if cfg.centering == "exact" else None


def run_size_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Fraction of null replicates with ``Q_n > omega``."""
    omega = _omega_global(cfg)

    def one(r):
        real, E = _replicate(cfg, r)
        prof = jump_profile(E, cfg.bn, _scale(cfg, real, E), cfg.centering, _centering_model(cfg, real))
        return stat_global(prof).max_value

    q = np.array(_map_reps(one, cfg.reps, cfg.threads))
    size = float(np.mean(q > omega))
    se = math.sqrt(cfg.alpha * (1 - cfg.alpha) / cfg.reps)
    metrics = {"size": size, "omega": omega, "mc_se": se, "model": cfg.model.label}
    row = {"model": cfg.model.label, "n": cfg.n, "p": cfg.p, "bn": cfg.bn, "alpha": cfg.alpha, "size": size}
    return ExperimentReport("size", metrics, [row], cfg.to_dict())


def null_statistics(cfg: ExperimentConfig) -> np.ndarray:
    """``Q_n`` under the null for each replicate (used for distribution checks)."""

    def one(r):
        real, E = _replicate(cfg, r)
        prof = jump_profile(E, cfg.bn, _scale(cfg, real, E), cfg.centering, _centering_model(cfg, real))
        return stat_global(prof).max_value

    return np.array(_map_reps(one, cfg.reps, cfg.threads))


def run_power_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Rejection rates of the selected detectors at a single break.

    The break sits at ``cfg.tau`` (default ``n // 2``). Two layouts are
    supported: the first ``k`` series jump for each ``k`` in ``cfg.n_jump``
    (default: all series), or every series of neighborhood
    ``cfg.jump_group`` jumps. Detectors are evaluated on the same panels,
    so differences are paired.
    """
    unknown = set(cfg.detectors) - {"l2", "linf", "twoway"}
    if unknown:
        raise ConfigError(f"unknown detectors {sorted(unknown)}")
    tau = cfg.tau or cfg.n // 2
    nb = cfg.neighborhoods() if ("twoway" in cfg.detectors or cfg.jump_group is not None) else None
    omegas = {}
    if "l2" in cfg.detectors:
        omegas["l2"] = _omega_global(cfg)
    if "linf" in cfg.detectors:
        omegas["linf"] = _omega_linf(cfg)
    if "twoway" in cfg.detectors:
        omegas["twoway"] = _omega_twoway(cfg, nb)

    if cfg.jump_group is not None:
        layouts = [("group", nb.neighborhoods[nb.position(cfg.jump_group)].members)]
    else:
        counts = cfg.n_jump or (cfg.p,)
        layouts = [(k, tuple(range(k))) for k in counts]

    table = []
    for jump in cfg.jumps:
        for label, members in layouts:
            plan = BreakPlan.single(tau, jump, members)

            def one(r, plan=plan):
                real, E = _replicate(cfg, r)
                Y = inject_breaks(E, np.zeros(cfg.p), plan).values
                sigma = _scale(cfg, real, Y)
                out = {}
                prof = jump_profile(Y, cfg.bn, sigma, cfg.centering, _centering_model(cfg, real))
                if "l2" in omegas:
                    out["l2"] = stat_global(prof).max_value > omegas["l2"]
                if "linf" in omegas:
                    out["linf"] = float(np.abs(prof.V).max()) > omegas["linf"]
                if "twoway" in omegas:
                    out["twoway"] = stat_twoway(prof, nb).max_value > omegas["twoway"]
                return out

            res = _map_reps(one, cfg.reps, cfg.threads)
            row = {"jump": jump, "n_jump": label if label == "group" else int(label)}
            hits = {d: np.array([x[d] for x in res], dtype=float) for d in omegas}
            for d, h in hits.items():
                row[f"power_{d}"] = float(h.mean())
            names = sorted(hits)
            for a_i, a in enumerate(names):
                for b in names[a_i + 1 :]:
                    diff = hits[a] - hits[b]
                    row[f"se_{a}_minus_{b}"] = float(diff.std(ddof=1) / math.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0
            table.append(row)
    metrics = {"omega": omegas, "tau": tau}
    return ExperimentReport("power", metrics, table, cfg.to_dict())


def _nearest(tau_hat: int, truth: Sequence[tuple[int, int | None]]) -> int:
    d = [abs(tau_hat - t) for t, _ in truth]
    return int(np.argmin(d))


def run_consistency_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Average estimation errors over replicates.

    Global mode reports AN = mean ``|K_hat - K|`` and AT/n with
    AT = sum over detected breaks of the distance to the nearest true break.
    Two-Way mode additionally reports AS/B_min, the mean symmetric
    difference between detected and matched true neighborhoods divided by
    the smallest neighborhood size. A detected break is matched to the true
    break minimizing the Euclidean distance between ``(tau, s)`` pairs.
    """
    if cfg.mode not in ("global", "twoway"):
        raise ConfigError(f"mode must be 'global' or 'twoway', got {cfg.mode!r}")
    if not cfg.breaks:
        raise ConfigError("consistency experiment needs a break plan")
    nb = cfg.neighborhoods() if (cfg.mode == "twoway" or any(g is not None for *_, g in cfg.breaks)) else None
    specs = []
    for tau, jump, grp in cfg.breaks:
        members = None if grp is None else nb.neighborhoods[nb.position(grp)].members
        specs.append(BreakSpec(tau, jump, members))
    plan = BreakPlan(tuple(specs))
    truth = [(t, g) for t, _, g in cfg.breaks]
    omega = _omega_global(cfg) if cfg.mode == "global" else _omega_twoway(cfg, nb)
    member_sets = nb.member_sets() if nb is not None else None

    def one(r):
        real, E = _replicate(cfg, r)
        Y = inject_breaks(E, np.zeros(cfg.p), plan).values
        sigma = _scale(cfg, real, Y)
        cm = _centering_model(cfg, real)
        if cfg.mode == "global":
            res = detect_global(Y, cfg.bn, sigma, omega, cfg.centering, cm, cfg.exclusion)
            at = sum(abs(b.tau - truth[_nearest(b.tau, truth)][0]) for b in res.breaks)
            return abs(res.k_hat - plan.K), at, 0.0
        res = detect_twoway(Y, cfg.bn, sigma, nb, omega, cfg.centering, cm)
        at = 0
        sym = 0
        for b in res.breaks:
            d = [math.hypot(b.tau - t, b.s - g) for t, g in truth]
            t_star, g_star = truth[int(np.argmin(d))]
            at += abs(b.tau - t_star)
            sym += len(member_sets[nb.position(b.s)] ^ member_sets[nb.position(g_star)])
        return abs(res.k_hat - plan.K), at, sym

    out = np.array(_map_reps(one, cfg.reps, cfg.threads), dtype=float)
    an, at, sym = out.mean(axis=0)
    metrics = {"AN": float(an), "AT_over_n": float(at / cfg.n), "omega": omega,
               "AN_se": float(out[:, 0].std(ddof=1) / math.sqrt(cfg.reps)) if cfg.reps > 1 else 0.0}
    if cfg.mode == "twoway":
        metrics["AS_over_Bmin"] = float(sym / nb.size_min)
    row = {"mode": cfg.mode, "model": cfg.model.label, "n": cfg.n, "p": cfg.p, "bn": cfg.bn}
    row.update({k: v for k, v in metrics.items() if k not in ("omega",)})
    return ExperimentReport("consistency", metrics, [row], cfg.to_dict())


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Copy of ``cfg`` with some fields replaced."""
    return replace(cfg, **kw)
