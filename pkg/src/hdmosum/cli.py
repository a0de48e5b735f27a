"""Command-line interface.

Every subcommand prints exactly one JSON document on stdout. Diagnostics go
to stderr, and failures also print ``{"error": ..., "type": ...}`` there.
With ``--out PATH`` the result is also written to ``PATH`` and a run
manifest (argv, resolved parameters, seed, library versions) to
``PATH.manifest.json``.

Exit codes: 0 success, 2 configuration, 3 I/O, 4 numerical, 5 data.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .detect import detect_global, detect_twoway
from .dgp import (
    ErrorModel,
    ExperimentConfig,
    run_consistency_experiment,
    run_power_experiment,
    run_size_experiment,
)
from .exceptions import ConfigError, DataValidationError, NumericalError
from .lrv import estimate_lrv, load_known_lrv
from .mosum import resolve_bn
from .neighborhoods import (
    enumerate_contiguous,
    enumerate_rectangles,
    load_neighborhoods_json,
)
from .nulllimit import ThresholdResult, cov_global, cov_twoway, sample_max, threshold
from .panel import load_panel_csv

SEED_ENV = "HDMOSUM_SEED"

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_DATA = 0, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to exit 2."""

    def error(self, message):
        raise ConfigError(message)


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# shared plumbing


def _load(args):
    panel, layout = load_panel_csv(args.input, args.layout)
    _log(f"loaded panel n={panel.n} p={panel.p}")
    return panel, layout


def _bn(args, n: int) -> int:
    return resolve_bn(n, args.bn, args.b)


def _lrv(args, panel):
    choice = args.lrv
    if choice == "robust":
        return estimate_lrv(panel)
    if choice.startswith("known:"):
        return load_known_lrv(choice[len("known:"):], panel.p)
    raise ConfigError(f"--lrv must be 'robust' or 'known:PATH', got {choice!r}")


def _err_model(args, p: int):
    if args.centering != "exact":
        return None
    if not args.model:
        raise ConfigError("--centering exact needs --model with frozen coefficients")
    d = json.loads(Path(args.model).read_text(encoding="utf-8"))
    model = ErrorModel.from_dict(d)
    if model.kind != "iid" and model.coeffs is None:
        raise ConfigError("--model must freeze 'coeffs' for exact centering")
    return model.realize(np.random.default_rng(0), p)


def _nbhds(args, panel, layout):
    if args.nbhds:
        return load_neighborhoods_json(args.nbhds, panel, layout)
    if args.enumerate:
        parts = [int(x) for x in args.enumerate.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError("--enumerate takes MIN:MAX or MIN:MAX:STRIDE")
        stride = parts[2] if len(parts) == 3 else 1
        if layout.dim == 1:
            return enumerate_contiguous(panel.p, parts[0], parts[1], stride)
        return enumerate_rectangles(layout, parts[0], parts[1], stride)
    raise ConfigError("give --nbhds PATH or --enumerate MIN:MAX[:STRIDE]")


def _omega(args, cov) -> ThresholdResult:
    if getattr(args, "threshold", None):
        d = json.loads(Path(args.threshold).read_text(encoding="utf-8"))
        res = ThresholdResult.from_dict(d)
        _log(f"using cached threshold omega={res.omega:.6g}")
        return res
    draws = sample_max(cov, args.reps, args.seed, args.threads)
    res = threshold(draws, args.alpha, args.seed)
    _log(f"calibrated omega={res.omega:.6g} from {args.reps} draws")
    return res


def _check_alpha(args) -> None:
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {args.alpha}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_detect(args) -> dict:
    panel, _ = _load(args)
    bn = _bn(args, panel.n)
    lrv = _lrv(args, panel)
    thr = _omega(args, cov_global(panel.n, bn, panel.p))
    res = detect_global(panel, bn, lrv, thr.omega, args.centering,
                        _err_model(args, panel.p), args.exclusion)
    out = res.to_dict()
    out["bn"] = bn
    return out


def cmd_detect2w(args) -> dict:
    panel, layout = _load(args)
    bn = _bn(args, panel.n)
    nb = _nbhds(args, panel, layout)
    lrv = _lrv(args, panel)
    thr = _omega(args, cov_twoway(panel.n, bn, nb))
    res = detect_twoway(panel, bn, lrv, nb, thr.omega, args.centering, _err_model(args, panel.p))
    out = res.to_dict()
    out["bn"] = bn
    return out


def cmd_lrv(args) -> dict:
    panel, _ = _load(args)
    return estimate_lrv(panel, m=args.block_size, full=args.full).to_dict()


def cmd_threshold(args) -> dict:
    if args.input:
        panel, layout = _load(args)
        n, p = panel.n, panel.p
    else:
        if args.n is None or args.p is None:
            raise ConfigError("give --input or both --n and --p")
        n, p, panel, layout = args.n, args.p, None, None
    bn = _bn(args, n)
    if args.mode == "global":
        cov = cov_global(n, bn, p)
    else:
        if panel is None:
            if not args.enumerate:
                raise ConfigError("twoway threshold without --input needs --enumerate")
            lo, hi, *rest = (int(x) for x in args.enumerate.split(":"))
            nb = enumerate_contiguous(p, lo, hi, rest[0] if rest else 1)
        else:
            nb = _nbhds(args, panel, layout)
        cov = cov_twoway(n, bn, nb)
    args.threshold = None
    out = _omega(args, cov).to_dict()
    out.update(mode=args.mode, n=n, p=p, bn=bn)
    return out


_RUNNERS = {
    "size": run_size_experiment,
    "power": run_power_experiment,
    "consistency": run_consistency_experiment,
}


def _experiment(d: dict, args):
    d = dict(d)
    kind = d.pop("experiment", "size")
    if kind not in _RUNNERS:
        raise ConfigError(f"unknown experiment {kind!r}")
    d.setdefault("seed", args.seed)
    d.setdefault("threads", args.threads)
    try:
        cfg = ExperimentConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError(f"bad experiment config: {exc}") from None
    return _RUNNERS[kind](cfg)


def cmd_simulate(args) -> dict:
    d = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(d, dict):
        raise ConfigError("experiment config must be a JSON object")
    rep = _experiment(d, args)
    if args.csv:
        rep.to_csv(args.csv)
    return rep.to_dict()


def bench_configs(reps: int, mc_reps: int) -> dict[str, dict]:
    """Named benchmark cells at reduced replicate counts."""
    ma = ErrorModel("ma_inf", "student", beta=2.0).to_dict()
    base = {"n": 200, "bn": 30, "reps": reps, "mc_reps": mc_reps}
    return {
        "size_iid_p50": {**base, "experiment": "size", "p": 50},
        "size_ma_t9_p400": {**base, "experiment": "size", "p": 400, "model": ma},
        "consistency_ma_t9_p50": {
            **base, "experiment": "consistency", "p": 50, "model": ma, "exclusion": "open",
            "breaks": [[40, 2.0, None], [100, 2.0, None], [160, 2.0, None]],
        },
        "power_ma_t9_p100": {
            "experiment": "power", "n": 100, "p": 100, "bn": 20, "reps": reps,
            "mc_reps": mc_reps, "model": ErrorModel("ma_inf", "student", beta=1.5).to_dict(),
            "n_jump": [1, 100],
        },
    }


def cmd_bench(args) -> dict:
    cells = bench_configs(args.reps, args.mc_reps)
    names = args.cells or sorted(cells)
    unknown = [c for c in names if c not in cells]
    if unknown:
        raise ConfigError(f"unknown bench cells {unknown}; choose from {sorted(cells)}")
    out = {}
    for name in names:
        _log(f"bench {name}")
        out[name] = _experiment(cells[name], args).to_dict()
    return out


def cmd_scan_bn(args) -> dict:
    panel, _ = _load(args)
    try:
        grid = [int(x) for x in args.grid.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--grid must be comma-separated integers, got {args.grid!r}") from None
    if not grid:
        raise ConfigError("--grid is empty")
    if grid != sorted(set(grid)):
        raise ConfigError("--grid must be strictly ascending")
    lrv = _lrv(args, panel)
    rows, flagged = [], None
    for bn in grid:
        bn = resolve_bn(panel.n, bn)
        thr = _omega(args, cov_global(panel.n, bn, panel.p))
        res = detect_global(panel, bn, lrv, thr.omega, args.centering,
                            _err_model(args, panel.p), args.exclusion)
        if flagged is None and rows and res.k_hat < rows[-1]["k_hat"]:
            flagged = bn
        rows.append({"bn": bn, "k_hat": res.k_hat, "taus": res.taus, "omega": thr.omega})
    return {"grid": rows, "first_drop_bn": flagged}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdmosum", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hdmosum {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, data=True, bandwidth=True):
        p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 0")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", help="also write the result JSON here, plus a manifest")
        if data:
            p.add_argument("--input", required=p.prog.split()[-1] != "threshold")
            p.add_argument("--layout")
        if bandwidth:
            g = p.add_mutually_exclusive_group()
            g.add_argument("--bn", type=int)
            g.add_argument("--b", type=float)

    def calib(p):
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--reps", type=int, default=1000, help="Monte-Carlo draws for the threshold")

    def detecting(p):
        calib(p)
        p.add_argument("--centering", choices=["asymptotic", "exact"], default="asymptotic")
        p.add_argument("--model", help="ErrorModel JSON with frozen coeffs (exact centering)")
        p.add_argument("--lrv", default="robust", help="robust | known:PATH")
        p.add_argument("--threshold", help="cached threshold JSON from 'hdmosum threshold'")

    p = sub.add_parser("detect", help="global multiple change-point detection")
    common(p)
    detecting(p)
    p.add_argument("--exclusion", choices=["closed", "open"], default="closed")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("detect2w", help="Two-Way detection over neighborhoods")
    common(p)
    detecting(p)
    p.add_argument("--nbhds", help="neighborhood JSON")
    p.add_argument("--enumerate", help="MIN:MAX[:STRIDE] sizes (or rectangle sides)")
    p.set_defaults(func=cmd_detect2w)

    p = sub.add_parser("lrv", help="robust long-run scale estimate")
    common(p, bandwidth=False)
    p.add_argument("--block-size", type=int)
    p.add_argument("--full", action="store_true", help="also estimate correlations")
    p.set_defaults(func=cmd_lrv)

    p = sub.add_parser("threshold", help="calibrate omega from the Gaussian limit")
    common(p)
    calib(p)
    p.add_argument("--mode", choices=["global", "twoway"], default="global")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--nbhds")
    p.add_argument("--enumerate")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("simulate", help="run one experiment from a JSON config")
    common(p, data=False, bandwidth=False)
    p.add_argument("--config", required=True)
    p.add_argument("--csv", help="write the report table as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", help="run named benchmark cells")
    common(p, data=False, bandwidth=False)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--mc-reps", type=int, default=1000)
    p.add_argument("cells", nargs="*")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("scan-bn", help="K_hat over a bandwidth grid")
    common(p, bandwidth=False)
    detecting(p)
    p.add_argument("--grid", required=True, help="ascending comma-separated bn values")
    p.add_argument("--exclusion", choices=["closed", "open"], default="closed")
    p.set_defaults(func=cmd_scan_bn, bn=None, b=None)
    return parser


def _manifest(args, argv) -> dict:
    params = {k: v for k, v in vars(args).items() if k != "func"}
    return {
        "argv": list(argv),
        "params": params,
        "seed": args.seed,
        "versions": {
            "hdmosum": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        if args.seed is None:
            args.seed = _default_seed()
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        _check_alpha(args)
        result = args.func(args)
        text = json.dumps(result, default=_jsonable)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            Path(args.out + ".manifest.json").write_text(
                json.dumps(_manifest(args, argv), default=_jsonable, indent=1), encoding="utf-8"
            )
        print(text)
        return EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except DataValidationError as exc:
        return _fail(exc, EXIT_DATA)
    except NumericalError as exc:
        return _fail(exc, EXIT_NUMERIC)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(exc, EXIT_IO if isinstance(exc, OSError) else EXIT_DATA)


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps({"error": str(exc), "type": type(exc).__name__, "exit_code": code}), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
