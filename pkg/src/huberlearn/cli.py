"""Command-line front end.

Exit status: 0 on success, 1 on usage errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import bilevel, fileio, regeval
from .costs import CostKind
from .grid import INF, psnr
from .solver import RegularizerKind, SolverConfig, SolverDivergedError, solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

DEFAULT_SCHEDULE = "10:1e-2,100:1e-4,1000:1e-8,inf:0"

# built-in defaults; config files and flags override them in that order
DEFAULTS = {
    "reg": "tv",
    "gamma": "100",
    "eps": "1e-10",
    "cost": "l2sq",
    "seed": "0",
    "warm_start": "on",
    "max_iters": "10000",
    "gap_tol": "1e-6",
    "check_every": "10",
    "alpha2": None,
    "workers": "1",
    "size": "64",
    "sigma": "0.1",
    "schedule": DEFAULT_SCHEDULE,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _real_or_inf(text: str) -> float:
    t = str(text).strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return INF
    v = float(t)
    if math.isnan(v):
        raise ValueError("nan is not allowed")
    return v


def _common(p: argparse.ArgumentParser, reg=True, solver=True):
    p.add_argument("--config", help="flat key=value file; flags take precedence")
    if reg:
        p.add_argument("--reg", choices=["tv", "tgv2", "ictv"])
    if solver:
        p.add_argument("--gamma", help="Huber parameter (number or inf)")
        p.add_argument("--eps", help="H1 smoothing weight")
        p.add_argument("--max-iters", dest="max_iters")
        p.add_argument("--gap-tol", dest="gap_tol")
        p.add_argument("--check-every", dest="check_every")
    p.add_argument("--seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="huberlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("denoise", help="one lower-level solve")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--clean", help="ground truth, for PSNR in the stats")
    p.add_argument("--alpha")
    p.add_argument("--alpha2")
    p.add_argument("--scale-by-n", dest="scale_by_n", action="store_true", default=None)
    p.add_argument("--out", help="output PNG")
    p.add_argument("--stats", help="stats JSON (default: <out>.json)")

    for name in ("landscape", "sweep"):
        p = sub.add_parser(name, help=f"{name} over a weight grid")
        _common(p)
        p.add_argument("--input")
        p.add_argument("--clean")
        p.add_argument("--grid", help="grid file or builtin:paperU")
        p.add_argument("--alpha", help="not valid with --grid")
        p.add_argument("--alpha2", help="not valid with --grid")
        p.add_argument("--cost", choices=["l2sq", "l1grad"])
        p.add_argument("--eta", help="cost Huber parameter (number or inf)")
        p.add_argument("--scale-by-n", dest="scale_by_n", action="store_true", default=None)
        p.add_argument("--warm-start", dest="warm_start", choices=["on", "off"])
        p.add_argument("--workers")
        p.add_argument("--out")
        if name == "landscape":
            p.add_argument("--argmin", help="argmin JSON (default: <out>.argmin.json)")
        else:
            p.add_argument("--schedule", help=f"gamma:eps pairs (default {DEFAULT_SCHEDULE})")

    p = sub.add_parser("check-condition", help="interior-optimality condition")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--clean")
    p.add_argument("--alpha2")
    p.add_argument("--out", help="report JSON (default: stdout)")

    p = sub.add_parser("eval-reg", help="print TV, TGV2 and ICTV values")
    _common(p, reg=False)
    p.add_argument("--input")
    p.add_argument("--alpha2")

    p = sub.add_parser("make-fixture", help="synthesize ground truth and noisy data")
    _common(p, reg=False, solver=False)
    p.add_argument("--size")
    p.add_argument("--sigma")
    p.add_argument("--out-noisy", dest="out_noisy")
    p.add_argument("--out-clean", dest="out_clean")
    p.add_argument("--npz", help="also store unquantized arrays and the seed")
    return parser


def _resolve(ns: argparse.Namespace) -> argparse.Namespace:
    cfg = fileio.load_config(ns.config) if getattr(ns, "config", None) else {}
    for key, val in cfg.items():
        if not hasattr(ns, key):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(ns, key) is None:
            if key == "scale_by_n":
                val = val.lower() in ("1", "true", "yes", "on")
            setattr(ns, key, val)
    for key, val in DEFAULTS.items():
        if hasattr(ns, key) and getattr(ns, key) is None:
            setattr(ns, key, val)
    if hasattr(ns, "scale_by_n") and ns.scale_by_n is None:
        ns.scale_by_n = False
    return ns


_REQUIRED = {
    "denoise": ["input", "alpha", "out"],
    "landscape": ["input", "clean", "grid", "out"],
    "sweep": ["input", "clean", "grid", "out"],
    "check-condition": ["input", "clean"],
    "eval-reg": ["input"],
    "make-fixture": ["out_noisy", "out_clean"],
}


def _conflicts(ns) -> None:
    missing = ["--" + k.replace("_", "-") for k in _REQUIRED[ns.command] if getattr(ns, k) is None]
    if missing:
        raise UsageError("missing required flags: " + ", ".join(missing))
    bad = []
    if ns.command in ("landscape", "sweep"):
        if ns.alpha is not None:
            bad.append("--alpha with --grid")
        if ns.alpha2 is not None:
            bad.append("--alpha2 with --grid")
        if ns.eta is not None and ns.cost == "l2sq":
            bad.append("--eta with --cost l2sq")
    if ns.command == "denoise" and ns.reg == "tv" and ns.alpha2 is not None:
        bad.append("--alpha2 with --reg tv")
    if ns.command == "denoise" and ns.reg != "tv" and ns.alpha2 is None:
        bad.append(f"--reg {ns.reg} without --alpha2")
    if bad:
        raise UsageError("conflicting flags: " + "; ".join(bad))


def _solver_cfg(ns) -> SolverConfig:
    return SolverConfig(
        max_iters=int(ns.max_iters),
        gap_tol=float(ns.gap_tol),
        check_every=int(ns.check_every),
        seed=int(ns.seed),
    )


def _kind(ns) -> RegularizerKind:
    return RegularizerKind[ns.reg.upper()]


def _load_pair(ns):
    f = fileio.load_image(ns.input)
    f0 = fileio.load_image(ns.clean)
    return f, f0


def _grid(ns, kind, n: int) -> bilevel.AlphaGrid:
    arity = kind.n_params
    if ns.grid.startswith("builtin:"):
        grid = bilevel.AlphaGrid.builtin(ns.grid.split(":", 1)[1], arity)
    else:
        axes = []
        for line in Path(ns.grid).read_text().splitlines():
            line = line.split("#", 1)[0].replace(",", " ").split()
            if line:
                axes.append([float(v) for v in line])
        if len(axes) != arity:
            raise UsageError(f"grid file has {len(axes)} axes, {kind.name} needs {arity}")
        grid = bilevel.AlphaGrid(*axes)
    return grid.scaled(1.0 / n) if ns.scale_by_n else grid


def _cost(ns) -> CostKind:
    if ns.cost == "l2sq":
        return CostKind.l2sq()
    return CostKind.l1grad(_real_or_inf(ns.eta) if ns.eta is not None else INF)


def _schedule(text: str):
    out = []
    for item in text.split(","):
        g, e = item.split(":")
        out.append((_real_or_inf(g), float(e)))
    return out


def _cmd_denoise(ns) -> int:
    kind = _kind(ns)
    f = fileio.load_image(ns.input)
    alpha = [float(ns.alpha)] + ([float(ns.alpha2)] if ns.alpha2 is not None else [])
    if ns.scale_by_n:
        alpha = [a / f.shape[1] for a in alpha]
    res = solve(kind, f, alpha if len(alpha) > 1 else alpha[0], _real_or_inf(ns.gamma),
                float(ns.eps), _solver_cfg(ns))
    fileio.save_image(res.u, ns.out)
    stats = {
        "regularizer": kind.name,
        "alpha": alpha,
        "gamma": "inf" if math.isinf(_real_or_inf(ns.gamma)) else float(ns.gamma),
        "eps": float(ns.eps),
        "iterations": res.iterations,
        "rel_gap": res.rel_gap,
        "gap": res.gap,
        "objective": res.objective,
        "converged": res.converged,
    }
    if ns.clean:
        stats["psnr"] = psnr(res.u, fileio.load_image(ns.clean))
    fileio.save_report_json(stats, ns.stats or str(ns.out) + ".json")
    return EXIT_OK


def _cmd_landscape(ns) -> int:
    kind = _kind(ns)
    f, f0 = _load_pair(ns)
    grid = _grid(ns, kind, f.shape[1])
    gamma = _real_or_inf(ns.gamma)
    ls = bilevel.landscape(kind, f, f0, grid, gamma, float(ns.eps), _cost(ns), _solver_cfg(ns),
                           warm_start=ns.warm_start == "on", workers=int(ns.workers))
    fileio.save_landscape_csv(ls, ns.out)
    alpha, interior, idx = bilevel.argmin_landscape(ls)
    report = {
        "alpha": list(alpha),
        "index": list(idx),
        "interior": interior,
        "cost": float(ls.cost_values[idx]),
        "converged_fraction": float(np.mean(ls.converged)),
        "unimodality_violations": bilevel.unimodality_violations(ls),
        "meta": {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in ls.meta.items()},
    }
    fileio.save_report_json(report, ns.argmin or str(ns.out) + ".argmin.json")
    return EXIT_OK


def _cmd_sweep(ns) -> int:
    kind = _kind(ns)
    f, f0 = _load_pair(ns)
    grid = _grid(ns, kind, f.shape[1])
    res = bilevel.sweep(kind, f, f0, grid, _cost(ns), _schedule(ns.schedule), _solver_cfg(ns),
                        warm_start=ns.warm_start == "on", workers=int(ns.workers))
    fileio.save_report_json(res, ns.out)
    return EXIT_OK


def _cmd_check(ns) -> int:
    kind = _kind(ns)
    f, f0 = _load_pair(ns)
    alpha2 = float(ns.alpha2) if ns.alpha2 is not None else 1.0
    rep = regeval.check_interior(kind, f, f0, alpha2, _solver_cfg(ns))
    if ns.out:
        fileio.save_report_json(rep, ns.out)
    else:
        sys.stdout.write(fileio.report_json_text(rep))
    return EXIT_OK


def _cmd_eval(ns) -> int:
    v = fileio.load_image(ns.input)
    alpha2 = float(ns.alpha2) if ns.alpha2 is not None else 1.0
    cfg = SolverConfig(max_iters=int(ns.max_iters), gap_tol=float(ns.gap_tol), seed=int(ns.seed))
    tgv = regeval.tgv2_value(v, alpha2, cfg)
    ictv = regeval.ictv_value(v, alpha2, cfg)
    print(f"tv {regeval.tv_value(v):.17g}")
    print(f"tgv2 {tgv.value:.17g} rel_gap {tgv.rel_gap:.3e} converged {str(tgv.converged).lower()}")
    print(f"ictv {ictv.value:.17g} rel_gap {ictv.rel_gap:.3e} converged {str(ictv.converged).lower()}")
    return EXIT_OK


def _cmd_fixture(ns) -> int:
    f, f0 = fileio.make_fixture(int(ns.size), float(ns.sigma), int(ns.seed))
    fileio.save_image(f, ns.out_noisy)
    fileio.save_image(f0, ns.out_clean)
    if ns.npz:
        np.savez(ns.npz, f=f, f0=f0, seed=int(ns.seed), sigma=float(ns.sigma))
    return EXIT_OK


_COMMANDS = {
    "denoise": _cmd_denoise,
    "landscape": _cmd_landscape,
    "sweep": _cmd_sweep,
    "check-condition": _cmd_check,
    "eval-reg": _cmd_eval,
    "make-fixture": _cmd_fixture,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = _resolve(parser.parse_args(argv))
        _conflicts(ns)
        return _COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverDivergedError, bilevel.NoConvergedPointError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
