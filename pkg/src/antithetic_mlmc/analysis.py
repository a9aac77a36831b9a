"""Convergence studies: strong error against a fine reference, level variance decay,
cost against accuracy, and log-log slope fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .brownian import RngStream, make_stream
from .mlmc import MlmcConfig, MlmcNotConverged, run_mlmc
from .model import Payoff, SdeModel
from .parallel import map_chunks
from .scheme import SchemeDivergence, SchemeSpec, mm_step, simulate_triple, validate_scheme

# stream level tag reserved for reference paths, kept clear of MLMC levels
REFERENCE_LEVEL = -1


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    points: int


def fit_slope(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    """Least-squares line through ``(log2 x, log2 y)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size != ys.size:
        raise ValueError("xs and ys differ in length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points, got {xs.size}")
    if np.any(~(xs > 0)) or np.any(~(ys > 0)):
        raise ValueError("slope fit needs strictly positive values")
    res = sps.linregress(np.log2(xs), np.log2(ys))
    r2 = min(1.0, max(0.0, res.rvalue ** 2)) if np.isfinite(res.rvalue) else 1.0
    return SlopeFit(float(res.slope), float(res.intercept), float(r2), int(xs.size))


def asymptotic_window(n_points: int) -> slice:
    """Drop the two coarsest points once there are at least six."""
    return slice(2, None) if n_points >= 6 else slice(None)


# --- strong error ------------------------------------------------------------

@dataclass(frozen=True)
class StrongErrorRow:
    h: float
    err_l2: float
    err_l4: float
    n_samples: int


def _dyadic_ratio(h: float, h_exact: float) -> int:
    r = h / h_exact
    k = round(math.log2(r)) if r > 0 else -1
    if k < 1 or not math.isclose(r, 2.0 ** k, rel_tol=1e-12):
        raise ValueError(f"stepsize {h} is not a dyadic multiple (>1) of h_exact={h_exact}")
    return 2 ** k


def _n_steps(T: float, h: float) -> int:
    n = round(T / h)
    if n < 1 or not math.isclose(n * h, T, rel_tol=1e-12):
        raise ValueError(f"stepsize {h} does not divide the horizon {T}")
    return n


def _coupled_run(spec, model, stream, h_exact, ratios, keep_increments=False):
    """One pass over the fine grid, stepping coarser paths on aggregated increments.

    Only one running sum per coarser resolution is held, never the path.
    """
    n_fine = _n_steps(model.horizon, h_exact)
    m = model.dim_noise
    n = stream.n_samples
    sqh = math.sqrt(h_exact)
    y_ref = model.start(n)
    ys = [model.start(n) for _ in ratios]
    acc = [np.zeros((n, m)) for _ in ratios]
    kept = [[] for _ in ratios]
    w_T = np.zeros((n, m))
    try:
        for k in range(n_fine):
            dw = stream.normals(m) * sqh
            w_T = w_T + dw
            y_ref = mm_step(spec, model, y_ref, h_exact, dw, step=k, path="reference")
            for i, r in enumerate(ratios):
                acc[i] = acc[i] + dw
                if (k + 1) % r == 0:
                    ys[i] = mm_step(spec, model, ys[i], r * h_exact, acc[i],
                                    step=k // r, path=f"h={r}*h_exact")
                    if keep_increments:
                        kept[i].append(acc[i])
                    acc[i] = np.zeros((n, m))
    except SchemeDivergence as err:
        raise SchemeDivergence(err.step, int(stream.sample_index[err.sample]), err.path) from None
    return y_ref, ys, kept, w_T


def reference_terminal(spec: SchemeSpec, model: SdeModel, stream: RngStream, h_exact: float,
                       aggregate: Sequence[int] = ()):
    """Terminal state of a fine reference path.

    With ``aggregate`` (dyadic step ratios), also returns, per ratio, the list
    of coarse increments obtained by summing consecutive fine increments.
    """
    validate_scheme(spec, model)
    y_ref, _, kept, _ = _coupled_run(spec, model, stream, h_exact, list(aggregate),
                                  keep_increments=bool(aggregate))
    if aggregate:
        return y_ref, kept
    return y_ref


def strong_error_study(spec: SchemeSpec, model: SdeModel, stepsizes: Sequence[float],
                       n_samples: int, seed: int, h_exact: float = 2.0 ** -12,
                       workers: int = 1, exact=None) -> list[StrongErrorRow]:
    """Monte Carlo L2 and L4 errors at ``T`` of each stepsize against the reference.

    Every coarse run is driven by the same Brownian path as its reference.
    If ``exact`` is given it maps the Brownian endpoint ``W_T`` (shape
    ``(n, m)``) to the true terminal state, which then replaces the
    fine-grid reference.
    """
    validate_scheme(spec, model)
    ratios = [_dyadic_ratio(h, h_exact) for h in stepsizes]
    for h in stepsizes:
        _n_steps(model.horizon, h)

    def chunk(lo, hi):
        stream = make_stream(seed, REFERENCE_LEVEL, np.arange(lo, hi))
        y_ref, ys, _, w_T = _coupled_run(spec, model, stream, h_exact, ratios)
        if exact is not None:
            y_ref = np.asarray(exact(w_T), dtype=float).reshape(y_ref.shape)
        return np.stack([np.sum((y - y_ref) ** 2, axis=1) for y in ys])

    sq = np.concatenate(map_chunks(chunk, 0, n_samples, workers), axis=1)
    rows = []
    for h, e2 in zip(stepsizes, sq):
        rows.append(StrongErrorRow(float(h), math.sqrt(float(np.mean(e2))),
                                   float(np.mean(e2 * e2)) ** 0.25, n_samples))
    return rows


# --- variance decay ----------------------------------------------------------

@dataclass(frozen=True)
class VarianceRow:
    level: int
    h: float
    variance_antithetic: float
    variance_standard: float
    mean_antithetic: float
    mean_standard: float
    n_samples: int


def variance_decay_study(spec: SchemeSpec, model: SdeModel, payoff: Payoff,
                         levels: Sequence[int], n_samples: int, seed: int,
                         workers: int = 1) -> list[VarianceRow]:
    """Per-level correction variances of both estimators from the same coupled paths.

    ``h`` is the fine stepsize ``T 2^-level`` of each level.
    """
    validate_scheme(spec, model)
    rows = []
    for level in levels:
        if level < 1:
            raise ValueError("variance decay is measured for correction levels >= 1")

        def chunk(lo, hi, level=level):
            tri = simulate_triple(spec, model, level, make_stream(seed, level, np.arange(lo, hi)))
            pf, pa, pc = payoff(tri.fine), payoff(tri.anti), payoff(tri.coarse)
            return 0.5 * (pf + pa) - pc, pf - pc

        parts = map_chunks(chunk, 0, n_samples, workers)
        ya = np.concatenate([p[0] for p in parts])
        ys = np.concatenate([p[1] for p in parts])
        rows.append(VarianceRow(level, model.horizon * 2.0 ** -level,
                                float(np.var(ya, ddof=1)), float(np.var(ys, ddof=1)),
                                float(np.mean(ya)), float(np.mean(ys)), n_samples))
    return rows


# --- cost against accuracy ---------------------------------------------------

@dataclass(frozen=True)
class CostRow:
    eps: float
    mode: str
    total_cost: float
    estimate: float
    levels: int
    status: str


def cost_accuracy_study(spec: SchemeSpec, model: SdeModel, payoff: Payoff,
                        eps_list: Sequence[float], seed: int, workers: int = 1,
                        **cfg_kwargs) -> list[CostRow]:
    """Run the driver for each accuracy in both modes; failures become rows, not exceptions."""
    eps_list = list(eps_list)
    if any(not e > 0 for e in eps_list):
        raise ValueError("accuracies must be positive")
    if eps_list != sorted(eps_list, reverse=True):
        raise ValueError("accuracies must be given in descending order")
    rows = []
    for eps in eps_list:
        cfg = MlmcConfig(eps=eps, seed=seed, **cfg_kwargs)
        for mode, anti in (("antithetic", True), ("standard", False)):
            try:
                r = run_mlmc(spec, model, payoff, cfg, antithetic=anti, workers=workers)
                rows.append(CostRow(eps, mode, r.total_cost, r.estimate, r.levels, "ok"))
            except MlmcNotConverged as err:
                r = err.result
                rows.append(CostRow(eps, mode, r.total_cost, r.estimate, r.levels,
                                    "not-converged"))
            except SchemeDivergence as err:
                rows.append(CostRow(eps, mode, float("nan"), float("nan"),
                                    err.level if err.level is not None else -1, "diverged"))
    return rows
