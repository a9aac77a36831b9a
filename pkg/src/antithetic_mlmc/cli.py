"""Command-line front end.

Every subcommand writes a CSV whose ``#`` header echoes a canonical command
line; re-running that command reproduces the file byte for byte. Exit codes:
0 success, 1 numerical failure (divergence, bias test not met), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field

from . import __version__
from .analysis import (
    asymptotic_window,
    cost_accuracy_study,
    fit_slope,
    strong_error_study,
    variance_decay_study,
)
from .mlmc import MlmcConfig, MlmcNotConverged, run_mlmc
from .model import MODELS, PAYOFFS, get_model, get_payoff
from .scheme import SCHEMES, SchemeDivergence, get_scheme

PROG = "antithetic-mlmc"

DESK = dict(samples=10_000, h_exact_exp=12, levels=list(range(2, 9)))
PAPER = dict(samples=100_000, h_exact_exp=15, levels=list(range(1, 11)))
DEFAULT_H_EXPS = [6, 7, 8, 9, 10, 11]
DEFAULT_EPS_LIST = [0.02, 0.01, 0.005, 0.0025]
DEFAULT_PAYOFF = {"fhn": "fhn-smooth", "gbm": "identity-first"}


@dataclass
class RunConfig:
    subcommand: str
    model: str
    scheme: str
    payoff: str
    seed: int
    samples: int
    out: str | None
    paper_scale: bool = False
    workers: int = 1
    overrides: dict = field(default_factory=dict)
    h_exps: list = field(default_factory=list)
    h_exact_exp: int = 12
    levels: list = field(default_factory=list)
    eps_list: list = field(default_factory=list)
    eps: float = 0.005
    antithetic: bool = True
    alpha: float = 1.0
    max_level: int = 12
    min_samples: int = 100

    @property
    def stepsizes(self) -> list[float]:
        T = float(self.overrides.get("T", 1.0))
        return [T * 2.0 ** -k for k in self.h_exps]

    @property
    def h_exact(self) -> float:
        return float(self.overrides.get("T", 1.0)) * 2.0 ** -self.h_exact_exp

    def command(self) -> str:
        """Canonical command line; omits ``--out`` and ``--workers``, which never change results."""
        parts = [PROG, self.subcommand, "--model", self.model, "--scheme", self.scheme,
                 "--payoff", self.payoff, "--seed", str(self.seed)]
        for k in sorted(self.overrides):
            parts += ["--set", f"{k}={self.overrides[k]!r}"]
        if self.subcommand == "strong-order":
            parts += ["--samples", str(self.samples), "--h-exps", *map(str, self.h_exps),
                      "--h-exact-exp", str(self.h_exact_exp)]
        elif self.subcommand == "variance-decay":
            parts += ["--samples", str(self.samples), "--levels", *map(str, self.levels)]
        elif self.subcommand == "cost-accuracy":
            parts += ["--eps-list", *map(repr, self.eps_list)]
            parts += self._driver_flags()
        else:
            parts += ["--eps", repr(self.eps), "--antithetic" if self.antithetic else "--standard"]
            parts += self._driver_flags()
        return " ".join(parts)

    def _driver_flags(self) -> list[str]:
        return ["--alpha", repr(self.alpha), "--max-level", str(self.max_level),
                "--min-samples", str(self.min_samples)]


# --- argument parsing --------------------------------------------------------

def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _nonneg_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _positive_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be positive and finite, got {s}")
    return v


def _key_value(s: str) -> tuple[str, float]:
    key, sep, val = s.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {s!r}")
    try:
        return key.strip(), float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for {key!r} is not a number: {val!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=sorted(MODELS), default="fhn")
    common.add_argument("--scheme", choices=list(SCHEMES), default="tms1")
    common.add_argument("--payoff", choices=sorted(PAYOFFS), default=None,
                        help="default: fhn-smooth for fhn, identity-first for gbm")
    common.add_argument("--seed", type=_nonneg_int, default=0)
    common.add_argument("--samples", type=_positive_int, default=None)
    common.add_argument("--out", default=None, help="CSV path (default: stdout)")
    common.add_argument("--paper-scale", action="store_true",
                        help="1e5 samples, h_exact = 2^-15, levels 1..10")
    common.add_argument("--workers", type=_positive_int, default=1, help="sampling threads")
    common.add_argument("--set", dest="overrides", action="append", type=_key_value, default=[],
                        metavar="KEY=VALUE", help="model parameter override, repeatable")

    driver = argparse.ArgumentParser(add_help=False)
    driver.add_argument("--alpha", type=_positive_float, default=1.0)
    driver.add_argument("--max-level", type=_positive_int, default=12)
    driver.add_argument("--min-samples", type=_positive_int, default=100)

    parser = argparse.ArgumentParser(prog=PROG, description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("strong-order", parents=[common], help="strong L2/L4 error vs stepsize")
    p.add_argument("--h-exps", type=_positive_int, nargs="+", default=None,
                   help="stepsizes T*2^-k (default 6..11)")
    p.add_argument("--h-exact-exp", type=_positive_int, default=None)

    p = sub.add_parser("variance-decay", parents=[common], help="correction variance per level")
    p.add_argument("--levels", type=_positive_int, nargs="+", default=None)

    p = sub.add_parser("cost-accuracy", parents=[common, driver], help="MLMC cost vs accuracy")
    p.add_argument("--eps-list", type=_positive_float, nargs="+", default=None)

    p = sub.add_parser("mlmc", parents=[common, driver], help="single MLMC estimate")
    p.add_argument("--eps", type=_positive_float, default=0.005)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--antithetic", dest="antithetic", action="store_true", default=True)
    mode.add_argument("--standard", dest="antithetic", action="store_false")
    return parser


def parse_args(argv: list[str] | None = None) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    scale = PAPER if ns.paper_scale else DESK
    overrides = dict(ns.overrides)
    try:
        get_model(ns.model, overrides)
    except (KeyError, ValueError, TypeError) as err:
        parser.error(f"--set: {err}")
    cfg = RunConfig(
        subcommand=ns.subcommand, model=ns.model, scheme=ns.scheme,
        payoff=ns.payoff or DEFAULT_PAYOFF[ns.model], seed=ns.seed,
        samples=ns.samples or scale["samples"], out=ns.out,
        paper_scale=ns.paper_scale, workers=ns.workers, overrides=overrides)
    if ns.subcommand == "strong-order":
        cfg.h_exps = sorted(set(ns.h_exps or DEFAULT_H_EXPS))
        cfg.h_exact_exp = ns.h_exact_exp or scale["h_exact_exp"]
        if cfg.h_exps[-1] >= cfg.h_exact_exp:
            parser.error("--h-exps must all be coarser than --h-exact-exp")
    elif ns.subcommand == "variance-decay":
        cfg.levels = sorted(set(ns.levels or scale["levels"]))
    else:
        cfg.alpha, cfg.max_level, cfg.min_samples = ns.alpha, ns.max_level, ns.min_samples
        if cfg.min_samples < 2:
            parser.error("--min-samples must be at least 2")
        if ns.subcommand == "cost-accuracy":
            cfg.eps_list = sorted(set(ns.eps_list or DEFAULT_EPS_LIST), reverse=True)
        else:
            cfg.eps, cfg.antithetic = ns.eps, ns.antithetic
    return cfg


# --- execution ---------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


class _Report:
    def __init__(self, cfg: RunConfig, model):
        self.buf = io.StringIO()
        self.writer = csv.writer(self.buf, lineterminator="\n")
        self.comment(f"{PROG} {__version__}")
        self.comment(f"command: {cfg.command()}")
        self.comment(f"seed: {cfg.seed}")
        params = ", ".join(f"{k}={v!r}" for k, v in sorted(model.params.items()))
        self.comment(f"model: {cfg.model} ({params})")
        self.comment(f"scheme: {cfg.scheme}")
        self.comment(f"payoff: {cfg.payoff}")

    def comment(self, text: str) -> None:
        self.buf.write(f"# {text}\n")

    def row(self, *values) -> None:
        self.writer.writerow([_fmt(v) for v in values])

    def flush(self, out: str | None) -> None:
        text = self.buf.getvalue()
        if out is None:
            sys.stdout.write(text)
        else:
            with open(out, "w", newline="") as fh:
                fh.write(text)


def _slope_comment(report, name, xs, ys):
    xs, ys = list(xs), list(ys)
    if len(xs) >= 3 and all(v > 0 for v in ys):
        w = asymptotic_window(len(xs))
        fit = fit_slope(xs[w], ys[w])
        report.comment(f"slope {name}: {fit.slope!r} (r2={fit.r_squared!r}, points={fit.points})")


def run(cfg: RunConfig) -> int:
    model = get_model(cfg.model, cfg.overrides)
    spec = get_scheme(cfg.scheme)
    payoff = get_payoff(cfg.payoff)
    report = _Report(cfg, model)
    status = 0
    try:
        if cfg.subcommand == "strong-order":
            report.comment(f"samples: {cfg.samples}, h_exact: {cfg.h_exact!r}")
            rows = strong_error_study(spec, model, cfg.stepsizes, cfg.samples, cfg.seed,
                                      cfg.h_exact, cfg.workers)
            _slope_comment(report, "l2", [r.h for r in rows], [r.err_l2 for r in rows])
            _slope_comment(report, "l4", [r.h for r in rows], [r.err_l4 for r in rows])
            report.row("h", "err_l2", "err_l4", "n_samples")
            for r in rows:
                report.row(r.h, r.err_l2, r.err_l4, r.n_samples)

        elif cfg.subcommand == "variance-decay":
            report.comment(f"samples per level: {cfg.samples}")
            rows = variance_decay_study(spec, model, payoff, cfg.levels, cfg.samples,
                                        cfg.seed, cfg.workers)
            lv = [r.level for r in rows]
            for name in ("antithetic", "standard"):
                v = [getattr(r, f"variance_{name}") for r in rows]
                # slope against 2^level, i.e. against level in log2 units
                _slope_comment(report, name, [2.0 ** l for l in lv], v)
            report.row("level", "h", "variance_antithetic", "variance_standard", "n_samples")
            for r in rows:
                report.row(r.level, r.h, r.variance_antithetic, r.variance_standard, r.n_samples)

        elif cfg.subcommand == "cost-accuracy":
            rows = cost_accuracy_study(spec, model, payoff, cfg.eps_list, cfg.seed, cfg.workers,
                                       alpha_hint=cfg.alpha, max_level=cfg.max_level,
                                       min_samples=cfg.min_samples)
            for mode in ("antithetic", "standard"):
                ok = [r for r in rows if r.mode == mode and r.status == "ok"]
                _slope_comment(report, mode, [r.eps for r in ok], [r.total_cost for r in ok])
            report.row("eps", "mode", "total_cost", "estimate", "levels", "status")
            for r in rows:
                report.row(r.eps, r.mode, r.total_cost, r.estimate, r.levels, r.status)
            failed = [r for r in rows if r.status != "ok"]
            for r in failed:
                print(f"{PROG}: eps={r.eps} {r.mode}: {r.status}", file=sys.stderr)
            status = 1 if failed else 0

        else:
            mcfg = MlmcConfig(eps=cfg.eps, alpha_hint=cfg.alpha, max_level=cfg.max_level,
                              min_samples=cfg.min_samples, seed=cfg.seed)
            try:
                result = run_mlmc(spec, model, payoff, mcfg, cfg.antithetic, cfg.workers)
            except MlmcNotConverged as err:
                result = err.result
                print(f"{PROG}: {err}", file=sys.stderr)
                status = 1
            T = model.horizon
            report.row("level", "h_coarse", "N", "mean", "variance", "cost")
            for s in result.stats:
                h = T if s.level == 0 else T * 2.0 ** (1 - s.level)
                report.row(s.level, h, s.n_samples, s.mean, s.variance, s.cost)
            report.comment(
                f"footer: Z={result.estimate!r},L={result.levels},"
                f"total_cost={result.total_cost!r},bias_estimate={result.bias_estimate!r},"
                f"variance_estimate={result.variance_estimate!r},converged={result.converged}")
    except SchemeDivergence as err:
        report.comment(f"failed: {err}")
        report.flush(cfg.out)
        print(f"{PROG}: {err}", file=sys.stderr)
        return 1
    report.flush(cfg.out)
    return status


def main(argv: list[str] | None = None) -> int:
    cfg = parse_args(argv)
    try:
        return run(cfg)
    except ValueError as err:
        print(f"{PROG}: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
