"""Multilevel Monte Carlo driver with antithetic and standard level corrections.

Level 0 samples ``phi(Y_T)`` with a single step of size ``T``. Level
``l >= 1`` samples a correction built from coupled paths with coarse step
``T 2^(1-l)`` and fine step ``T 2^(-l)``:

    antithetic:  (phi(Y^f) + phi(Y^a)) / 2 - phi(Y^c)
    standard:     phi(Y^f) - phi(Y^c)

Cost is counted in path advances over one coarse interval, so an
antithetic sample at level ``l`` costs ``3 * 2^(l-1)`` and a standard one
``2 * 2^(l-1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brownian import RngStream, make_stream
from .model import Payoff, SdeModel
from .parallel import map_chunks
from .scheme import SchemeSpec, simulate_path, simulate_triple, validate_scheme


@dataclass
class LevelStats:
    """Streaming sums for one level; partial sums are combined with ``math.fsum``."""

    level: int
    n_samples: int = 0
    _sum_parts: list = field(default_factory=list, repr=False)
    _sq_parts: list = field(default_factory=list, repr=False)
    _cost_parts: list = field(default_factory=list, repr=False)

    def add(self, ys: np.ndarray, costs: np.ndarray) -> None:
        ys = np.asarray(ys, dtype=float)
        self.n_samples += ys.size
        self._sum_parts.append(float(np.sum(ys)))
        self._sq_parts.append(float(np.sum(ys * ys)))
        self._cost_parts.append(float(np.sum(costs)))

    @property
    def sum_y(self) -> float:
        return math.fsum(self._sum_parts)

    @property
    def sum_y2(self) -> float:
        return math.fsum(self._sq_parts)

    @property
    def total_cost(self) -> float:
        return math.fsum(self._cost_parts)

    @property
    def mean(self) -> float:
        return self.sum_y / self.n_samples if self.n_samples else 0.0

    @property
    def variance(self) -> float:
        n = self.n_samples
        if n < 2:
            return float("nan")
        return max(0.0, (self.sum_y2 - self.sum_y ** 2 / n) / (n - 1))

    @property
    def cost(self) -> float:
        """Cost per sample."""
        return self.total_cost / self.n_samples if self.n_samples else float("nan")


@dataclass(frozen=True)
class MlmcConfig:
    eps: float
    alpha_hint: float = 1.0
    max_level: int = 12
    min_level: int = 2
    min_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.alpha_hint > 0:
            raise ValueError("alpha_hint must be positive")
        if self.min_samples < 2:
            raise ValueError("min_samples must be at least 2")
        if not 1 <= self.min_level <= self.max_level:
            raise ValueError("need 1 <= min_level <= max_level")


@dataclass
class MlmcResult:
    estimate: float
    levels: int
    stats: list[LevelStats]
    total_cost: float
    bias_estimate: float
    variance_estimate: float
    converged: bool = True

    @property
    def mse_estimate(self) -> float:
        return self.bias_estimate ** 2 + self.variance_estimate

    @property
    def n_samples(self) -> list[int]:
        return [s.n_samples for s in self.stats]


class MlmcNotConverged(RuntimeError):
    """Bias test still failing at ``max_level``; ``result`` holds the diagnostics."""

    def __init__(self, result: MlmcResult, max_level: int):
        self.result = result
        super().__init__(
            f"bias estimate {result.bias_estimate:.3e} above tolerance at max level {max_level}")


# --- per-sample corrections --------------------------------------------------

def antithetic_correction_sample(spec: SchemeSpec, model: SdeModel, payoff: Payoff,
                                 level: int, stream: RngStream):
    tri = simulate_triple(spec, model, level, stream, antithetic=True)
    y = 0.5 * (payoff(tri.fine) + payoff(tri.anti)) - payoff(tri.coarse)
    return y, np.full(y.shape, float(tri.work))


def standard_correction_sample(spec: SchemeSpec, model: SdeModel, payoff: Payoff,
                               level: int, stream: RngStream):
    tri = simulate_triple(spec, model, level, stream, antithetic=False)
    y = payoff(tri.fine) - payoff(tri.coarse)
    return y, np.full(y.shape, float(tri.work))


def level_zero_sample(spec: SchemeSpec, model: SdeModel, payoff: Payoff, stream: RngStream):
    y = payoff(simulate_path(spec, model, 1, stream))
    return y, np.ones(y.shape)


def sample_level(spec: SchemeSpec, model: SdeModel, payoff: Payoff, level: int, seed: int,
                 start: int, count: int, antithetic: bool = True, workers: int = 1):
    """Samples ``start .. start+count-1`` of one level, concatenated in index order."""
    def chunk(lo, hi):
        stream = make_stream(seed, level, np.arange(lo, hi))
        if level == 0:
            return level_zero_sample(spec, model, payoff, stream)
        if antithetic:
            return antithetic_correction_sample(spec, model, payoff, level, stream)
        return standard_correction_sample(spec, model, payoff, level, stream)

    parts = map_chunks(chunk, start, count, workers)
    if not parts:
        return np.empty(0), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# --- driver ------------------------------------------------------------------

def allocate_samples(stats: list[LevelStats], eps: float) -> list[int]:
    """Optimal ``N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k))``.

    Guarantees ``sum_l V_l / N_l <= eps^2 / 2``.
    """
    if not stats:
        raise ValueError("no level statistics to allocate from")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    V = np.array([s.variance for s in stats])
    C = np.array([s.cost for s in stats])
    if np.any(~np.isfinite(V)) or np.any(~(C > 0)):
        raise ValueError("every level needs a pilot variance and positive cost")
    total = np.sum(np.sqrt(V * C))
    return [int(math.ceil(2.0 / eps ** 2 * math.sqrt(v / c) * total)) for v, c in zip(V, C)]


def bias_estimate(stats: list[LevelStats], alpha: float) -> float:
    """Extrapolated bias from the two finest corrections."""
    k = 2.0 ** alpha - 1.0
    return max(abs(stats[-1].mean) / k, abs(stats[-2].mean) / (2.0 * k))


def _snapshot(stats, alpha, converged=True) -> MlmcResult:
    estimate = math.fsum(s.mean for s in stats)
    var = math.fsum(s.variance / s.n_samples for s in stats if s.variance > 0)
    cost = math.fsum(s.total_cost for s in stats)
    return MlmcResult(estimate, len(stats) - 1, stats, cost,
                      bias_estimate(stats, alpha), var, converged)


def run_mlmc(spec: SchemeSpec, model: SdeModel, payoff: Payoff, cfg: MlmcConfig,
             antithetic: bool = True, workers: int = 1) -> MlmcResult:
    """Estimate ``E[phi(X_T)]`` to root-mean-square accuracy ``cfg.eps``.

    Half of the squared error budget goes to variance (via sample
    allocation) and half to squared bias (via level selection).
    """
    validate_scheme(spec, model)
    stats = [LevelStats(l) for l in range(cfg.min_level + 1)]
    todo = [cfg.min_samples] * len(stats)
    bias_tol = cfg.eps / math.sqrt(2.0)

    while True:
        for s, dn in zip(stats, todo):
            if dn > 0:
                ys, costs = sample_level(spec, model, payoff, s.level, cfg.seed,
                                         s.n_samples, dn, antithetic, workers)
                s.add(ys, costs)
        target = allocate_samples(stats, cfg.eps)
        todo = [max(0, t - s.n_samples) for t, s in zip(target, stats)]
        if any(todo):
            continue
        if bias_estimate(stats, cfg.alpha_hint) <= bias_tol:
            return _snapshot(stats, cfg.alpha_hint)
        if len(stats) - 1 >= cfg.max_level:
            raise MlmcNotConverged(_snapshot(stats, cfg.alpha_hint, converged=False),
                                   cfg.max_level)
        stats.append(LevelStats(len(stats)))
        todo.append(cfg.min_samples)
