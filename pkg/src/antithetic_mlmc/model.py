"""SDE problem definitions.

A model bundles the drift, the diffusion matrix and the Milstein
coefficients ``L^{j1} sigma_{j2} = (d sigma_{j2} / dx) sigma_{j1}`` of an Ito SDE

    dX = mu(X) dt + sigma(X) dW,   X(0) = x0,   t in (0, T].

All coefficient callables are vectorised over a leading batch axis:

    drift(x)      : (n, d)  -> (n, d)
    diffusion(x)  : (n, d)  -> (n, d, m)       column j is sigma_j
    milstein(x)   : (n, d)  -> (n, d, m, m)    [..., j1, j2] is L^{j1} sigma_{j2}

Noise indices are zero-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class SdeModel:
    name: str
    dim_state: int
    dim_noise: int
    initial_state: Array
    horizon: float
    gamma: float
    drift: Callable[[Array], Array]
    diffusion: Callable[[Array], Array]
    milstein: Callable[[Array], Array]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_noise < 1:
            raise ValueError("state and noise dimensions must be positive")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.gamma < 1:
            raise ValueError(f"growth exponent gamma must be >= 1, got {self.gamma}")
        x0 = np.asarray(self.initial_state, dtype=float).reshape(self.dim_state)
        object.__setattr__(self, "initial_state", x0)

    # single-state helpers, mostly for inspection and tests

    def drift_at(self, x) -> Array:
        return self.drift(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def diffusion_column(self, x, j: int) -> Array:
        return self.diffusion(np.asarray(x, dtype=float).reshape(1, -1))[0, :, j]

    def milstein_coeff(self, x, j1: int, j2: int) -> Array:
        """``L^{j1} sigma_{j2}`` at a single state ``x``."""
        return self.milstein(np.asarray(x, dtype=float).reshape(1, -1))[0, :, j1, j2]

    def start(self, n: int) -> Array:
        """Batch of ``n`` copies of the initial state."""
        return np.broadcast_to(self.initial_state, (n, self.dim_state)).copy()


@dataclass(frozen=True)
class Payoff:
    label: str
    eval: Callable[[Array], Array]

    def __call__(self, x: Array) -> Array:
        return self.eval(np.asarray(x, dtype=float))


def commutativity_defect(model: SdeModel, x, j1: int, j2: int) -> float:
    """Norm of ``L^{j1} sigma_{j2}(x) - L^{j2} sigma_{j1}(x)``.

    Identically zero for every pair exactly when the truncated Levy-area
    terms of the Milstein scheme vanish.
    """
    return float(np.linalg.norm(model.milstein_coeff(x, j1, j2) - model.milstein_coeff(x, j2, j1)))


def is_commutative(model: SdeModel, n_states: int = 100, radius: float = 10.0,
                   seed: int = 0, atol: float = 1e-12) -> bool:
    """Check the commutativity condition at random states of norm <= ``radius``."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_states, model.dim_state))
    x *= (radius * rng.uniform(size=(n_states, 1))) / np.maximum(
        np.linalg.norm(x, axis=1, keepdims=True), 1e-300)
    x = np.vstack([model.initial_state, x])
    L = model.milstein(x)
    defect = np.abs(L - np.swapaxes(L, 2, 3)).max()
    return bool(defect <= atol * (1.0 + np.abs(L).max()))


# --- FitzHugh-Nagumo ---------------------------------------------------------

@dataclass(frozen=True)
class FhnParams:
    epsilon: float = 0.5
    gamma_fhn: float = 0.5
    beta: float = 0.5
    c1: float = 0.5
    c2: float = 0.3
    c3: float = 0.0
    c4: float = 0.5
    d1: float = 0.1
    d2: float = 0.1
    T: float = 1.0
    x0: tuple = (0.0, 0.0)


def fhn_model(params: FhnParams | None = None) -> SdeModel:
    """Generalised stochastic FitzHugh-Nagumo model with state-dependent diagonal noise.

    The noise is non-commutative whenever ``c2`` or ``c3`` is nonzero.
    """
    p = params or FhnParams()
    vals = [getattr(p, f.name) for f in fields(p) if f.name != "x0"]
    if not np.all(np.isfinite(vals)):
        raise ValueError("FHN parameters must be finite")
    if p.epsilon == 0:
        raise ValueError("epsilon must be nonzero")

    def drift(x):
        x1, x2 = x[:, 0], x[:, 1]
        return np.stack([(x1 - x1 ** 3 - x2) / p.epsilon,
                         p.gamma_fhn * x1 - x2 + p.beta], axis=1)

    def diffusion(x):
        x1, x2 = x[:, 0], x[:, 1]
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = p.c1 * x1 + p.c2 * x2 + p.d1
        out[:, 1, 1] = p.c3 * x1 + p.c4 * x2 + p.d2
        return out

    def milstein(x):
        x1, x2 = x[:, 0], x[:, 1]
        s1 = p.c1 * x1 + p.c2 * x2 + p.d1
        s2 = p.c3 * x1 + p.c4 * x2 + p.d2
        # grad(sigma_1) = [[c1, c2], [0, 0]], grad(sigma_2) = [[0, 0], [c3, c4]]
        out = np.zeros((x.shape[0], 2, 2, 2))
        out[:, 0, 0, 0] = p.c1 * s1
        out[:, 0, 1, 0] = p.c2 * s2
        out[:, 1, 0, 1] = p.c3 * s1
        out[:, 1, 1, 1] = p.c4 * s2
        return out

    # cubic drift dominates the growth bound
    return SdeModel("fhn", 2, 2, np.array(p.x0, dtype=float), p.T, 3.0,
                    drift, diffusion, milstein, params=dict(p.__dict__))


# --- geometric Brownian motion -----------------------------------------------

def gbm_model(a: float = 0.05, b: float = 0.2, x0: float = 1.0, T: float = 1.0) -> SdeModel:
    """Scalar geometric Brownian motion ``dX = a X dt + b X dW``."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")

    def drift(x):
        return a * x

    def diffusion(x):
        return (b * x)[:, :, None]

    def milstein(x):
        return (b * b * x)[:, :, None, None]

    return SdeModel("gbm", 1, 1, np.array([x0], dtype=float), T, 1.0,
                    drift, diffusion, milstein, params=dict(a=a, b=b, x0=x0, T=T))


def gbm_exact(a: float, b: float, x0: float, T: float, w_T) -> Array:
    """Closed-form GBM terminal value driven by Brownian endpoint ``w_T``."""
    return x0 * np.exp((a - 0.5 * b * b) * T + b * np.asarray(w_T, dtype=float))


# --- registries --------------------------------------------------------------

def _fhn_from(overrides: dict) -> SdeModel:
    allowed = {f.name for f in fields(FhnParams)} - {"x0"}
    unknown = set(overrides) - allowed
    if unknown:
        raise KeyError(f"unknown FHN parameter(s): {', '.join(sorted(unknown))}")
    return fhn_model(replace(FhnParams(), **overrides))


def _gbm_from(overrides: dict) -> SdeModel:
    allowed = {"a", "b", "x0", "T"}
    unknown = set(overrides) - allowed
    if unknown:
        raise KeyError(f"unknown GBM parameter(s): {', '.join(sorted(unknown))}")
    return gbm_model(**overrides)


MODELS: dict[str, Callable[[dict], SdeModel]] = {
    "fhn": _fhn_from,
    "gbm": _gbm_from,
}

PAYOFFS: dict[str, Payoff] = {
    "fhn-smooth": Payoff("fhn-smooth", lambda x: 2.0 * x[..., 0] + np.sin(x[..., 1])),
    "identity-first": Payoff("identity-first", lambda x: x[..., 0].copy()),
}


def get_model(name: str, overrides: dict | None = None) -> SdeModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; valid: {', '.join(MODELS)}") from None
    return factory(dict(overrides or {}))


def get_payoff(name: str) -> Payoff:
    try:
        return PAYOFFS[name]
    except KeyError:
        raise KeyError(f"unknown payoff {name!r}; valid: {', '.join(PAYOFFS)}") from None
