"""Modified Milstein stepping without Levy areas, plus the coupled level paths.

One step of the modified scheme reads

    Y+ = P(Y) + mu_h(P(Y)) h + sigma_h(P(Y)) dW + sum_{j1,j2} (L^{j1} sigma_{j2})_h(P(Y)) Pi[j1, j2]

where ``P`` is a projection and the ``_h`` coefficients are modifications
that keep explicit stepping stable under super-linear growth. The supported
modifications are the identity (plain truncated Milstein), two taming rules
and a radial projection onto a ball of radius ``h^{-1/(2 gamma)}``.

States are batches shaped ``(n, d)``; increments are ``(n, m)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .brownian import CoupledIncrements, RngStream, antithetic_view, area_proxy, sample_coupled
from .model import SdeModel, is_commutative

Array = np.ndarray


class Modification(enum.Enum):
    IDENTITY = "identity"
    TMS1 = "tms1"
    TMS2 = "tms2"
    PROJECTION = "projection"


class Base(enum.Enum):
    MODIFIED_MILSTEIN = "mm"
    EULER_MARUYAMA = "em"
    CLASSICAL_MILSTEIN = "milstein-commutative"


@dataclass(frozen=True)
class SchemeSpec:
    base: Base = Base.MODIFIED_MILSTEIN
    modification: Modification = Modification.IDENTITY

    @property
    def label(self) -> str:
        for name, spec in SCHEMES.items():
            if spec == self:
                return name
        return f"{self.base.value}/{self.modification.value}"


SCHEMES: dict[str, SchemeSpec] = {
    "em": SchemeSpec(Base.EULER_MARUYAMA, Modification.IDENTITY),
    "milstein-commutative": SchemeSpec(Base.CLASSICAL_MILSTEIN, Modification.IDENTITY),
    "mm-identity": SchemeSpec(Base.MODIFIED_MILSTEIN, Modification.IDENTITY),
    "tms1": SchemeSpec(Base.MODIFIED_MILSTEIN, Modification.TMS1),
    "tms2": SchemeSpec(Base.MODIFIED_MILSTEIN, Modification.TMS2),
    "pms": SchemeSpec(Base.MODIFIED_MILSTEIN, Modification.PROJECTION),
}


def get_scheme(name: str) -> SchemeSpec:
    try:
        return SCHEMES[name]
    except KeyError:
        raise KeyError(f"unknown scheme {name!r}; valid: {', '.join(SCHEMES)}") from None


class SchemeDivergence(ArithmeticError):
    """A path produced a non-finite state."""

    def __init__(self, step: int, sample: int = -1, path: str = "", level: int | None = None):
        self.step = step
        self.sample = sample
        self.path = path
        self.level = level
        where = f"{path} path " if path else ""
        lvl = f"level {level}, " if level is not None else ""
        super().__init__(f"scheme diverged: {where}{lvl}step {step}, sample {sample}")


def validate_scheme(spec: SchemeSpec, model: SdeModel) -> None:
    """Refuse the classical Milstein base on non-commutative noise.

    Dropping the Levy area silently is exactly the ``mm-identity`` scheme and
    has to be requested as such.
    """
    if spec.base is Base.CLASSICAL_MILSTEIN and not is_commutative(model):
        raise ValueError(
            f"model {model.name!r} violates the commutativity condition; "
            "use 'mm-identity' for the truncated scheme")


# --- modifications -----------------------------------------------------------

def project(x: Array, h: float, gamma: float) -> Array:
    """Radial retraction of each row of ``x`` onto the ball of radius ``h^{-1/(2 gamma)}``."""
    x = np.asarray(x, dtype=float)
    radius = h ** (-1.0 / (2.0 * gamma))
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    outside = norm > radius
    # rows inside the ball (including x = 0) are returned untouched
    scale = np.where(outside, radius / np.where(outside, norm, 1.0), 1.0)
    return np.where(outside, x * scale, x)


def _milstein_norm_sq(L: Array) -> Array:
    return np.sum(L * L, axis=1)


def tame_tms1(model: SdeModel, x: Array, h: float):
    """Coefficients tamed by the drift size: ``mu / (1 + |mu|^2 h)`` and likewise for sigma.

    Each Milstein coefficient is tamed by its own norm. ``h`` may be a scalar
    or one stepsize per row.
    """
    h = np.asarray(h, dtype=float)
    mu = model.drift(x)
    sigma = model.diffusion(x)
    L = model.milstein(x)
    den = 1.0 + np.sum(mu * mu, axis=1) * h
    den_L = 1.0 + _milstein_norm_sq(L) * h.reshape(h.shape + (1, 1))
    return mu / den[:, None], sigma / den[:, None, None], L / den_L[:, None, :, :]


def tame_tms2(model: SdeModel, x: Array, h: float):
    """All coefficients divided by ``1 + |x|^{2(gamma - 1)} h``."""
    mu = model.drift(x)
    sigma = model.diffusion(x)
    L = model.milstein(x)
    den = 1.0 + np.sum(x * x, axis=1) ** (model.gamma - 1.0) * h
    return mu / den[:, None], sigma / den[:, None, None], L / den[:, None, None, None]


def modified_coefficients(spec: SchemeSpec, model: SdeModel, y: Array, h: float):
    """Evaluation point and modified ``(mu_h, sigma_h, L_h)`` for one step of size ``h``."""
    mod = spec.modification
    if mod is Modification.TMS1:
        return (y, *tame_tms1(model, y, h))
    if mod is Modification.TMS2:
        return (y, *tame_tms2(model, y, h))
    point = project(y, h, model.gamma) if mod is Modification.PROJECTION else y
    L = None if spec.base is Base.EULER_MARUYAMA else model.milstein(point)
    return point, model.drift(point), model.diffusion(point), L


# --- steppers ----------------------------------------------------------------

def mm_step(spec: SchemeSpec, model: SdeModel, y: Array, h: float, dw: Array,
            pi: Array | None = None, *, step: int = 0, path: str = "") -> Array:
    """Advance a batch of states by one step of size ``h``.

    ``pi`` is the area proxy for ``dw`` over the same interval and is built
    from ``dw`` when omitted. Raises :class:`SchemeDivergence` if any sample
    leaves the finite range.
    """
    if not h > 0:
        raise ValueError(f"timestep must be positive, got {h}")
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    if single:
        y = y[None, :]
        dw = np.asarray(dw, dtype=float)[None, :]
        if pi is not None:
            pi = np.asarray(pi, dtype=float)[None, :, :]
    m = dw.shape[1]

    with np.errstate(over="ignore", invalid="ignore"):
        point, mu, sigma, L = modified_coefficients(spec, model, y, h)
        out = point + mu * h
        for j in range(m):
            out = out + sigma[:, :, j] * dw[:, j, None]
        if spec.base is Base.MODIFIED_MILSTEIN:
            if pi is None:
                pi = area_proxy(dw, h)
            for j1 in range(m):
                for j2 in range(m):
                    out = out + L[:, :, j1, j2] * pi[:, j1, j2, None]
        elif spec.base is Base.CLASSICAL_MILSTEIN:
            # textbook form: L^{j1} sigma_{j2} (dW_j1 dW_j2 / 2 - [j1 == j2] h / 2)
            for j1 in range(m):
                for j2 in range(m):
                    c = 0.5 * dw[:, j1] * dw[:, j2]
                    if j1 == j2:
                        c = c - 0.5 * h
                    out = out + L[:, :, j1, j2] * c[:, None]

    finite = np.isfinite(out).all(axis=1)
    if not finite.all():
        raise SchemeDivergence(step, int(np.argmin(finite)), path)
    return out[0] if single else out


def coarse_step(spec: SchemeSpec, model: SdeModel, y_c: Array, inc: CoupledIncrements,
                *, step: int = 0) -> Array:
    dw = inc.coarse
    return mm_step(spec, model, y_c, inc.h, dw, area_proxy(dw, inc.h), step=step, path="coarse")


def fine_double_step(spec: SchemeSpec, model: SdeModel, y_f: Array, inc: CoupledIncrements,
                     *, step: int = 0, path: str = "fine") -> Array:
    """Two half steps of size ``h/2``; modifications also use ``h/2``."""
    half = 0.5 * inc.h
    y = mm_step(spec, model, y_f, half, inc.delta_first, area_proxy(inc.delta_first, half),
                step=2 * step, path=path)
    return mm_step(spec, model, y, half, inc.delta_second, area_proxy(inc.delta_second, half),
                   step=2 * step + 1, path=path)


def antithetic_double_step(spec: SchemeSpec, model: SdeModel, y_a: Array, inc: CoupledIncrements,
                           *, step: int = 0) -> Array:
    return fine_double_step(spec, model, y_a, antithetic_view(inc), step=step, path="anti")


@dataclass(frozen=True)
class PathTriple:
    """Terminal coarse, fine and antithetic states; ``anti`` is None when not simulated.

    ``work`` counts path advances over one coarse interval, per sample.
    """

    coarse: Array
    fine: Array
    anti: Array | None
    work: int


def simulate_triple(spec: SchemeSpec, model: SdeModel, level: int, stream: RngStream,
                    antithetic: bool = True) -> PathTriple:
    """Simulate the coupled paths of a level ``>= 1`` correction to time ``T``.

    The coarse path takes ``2^(level-1)`` steps of ``h = T 2^(1-level)``; the
    fine and antithetic paths take two half steps per coarse step, driven by
    the same half increments in opposite order.
    """
    if level < 1:
        raise ValueError(f"coupled paths need level >= 1, got {level}")
    validate_scheme(spec, model)
    n_coarse = 2 ** (level - 1)
    h = model.horizon / n_coarse
    n = stream.n_samples
    y_c = model.start(n)
    y_f = model.start(n)
    y_a = model.start(n) if antithetic else None
    work = 0
    try:
        for k in range(n_coarse):
            inc = sample_coupled(stream, h, model.dim_noise)
            y_c = coarse_step(spec, model, y_c, inc, step=k)
            y_f = fine_double_step(spec, model, y_f, inc, step=k)
            work += 2
            if antithetic:
                y_a = antithetic_double_step(spec, model, y_a, inc, step=k)
                work += 1
    except SchemeDivergence as err:
        raise SchemeDivergence(err.step, int(stream.sample_index[err.sample]),
                               err.path, level) from None
    return PathTriple(y_c, y_f, y_a, work)


def simulate_path(spec: SchemeSpec, model: SdeModel, n_steps: int, stream: RngStream) -> Array:
    """Terminal states of a single path family with ``n_steps`` uniform steps."""
    validate_scheme(spec, model)
    h = model.horizon / n_steps
    m = model.dim_noise
    y = model.start(stream.n_samples)
    try:
        for k in range(n_steps):
            dw = stream.normals(m) * np.sqrt(h)
            y = mm_step(spec, model, y, h, dw, step=k, path="single")
    except SchemeDivergence as err:
        raise SchemeDivergence(err.step, int(stream.sample_index[err.sample]), err.path) from None
    return y
