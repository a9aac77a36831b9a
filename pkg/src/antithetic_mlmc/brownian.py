"""Counter-based Brownian increments, coarse/fine coupling and the area-free proxy.

Every normal variate is a pure function of ``(seed, level, sample_index,
counter)``: the key is hashed into a SplitMix64 stream, the counter indexes
into it, and the 64-bit output goes through the inverse normal CDF. Sampling
is therefore order-free and can be split across threads without changing a
single bit of the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

Array = np.ndarray

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53


def _mix64(z: Array) -> Array:
    """SplitMix64 finaliser (bijective avalanche on uint64)."""
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(v) -> Array:
    return np.asarray(v, dtype=np.int64).astype(np.uint64)


def _stream_keys(seed: int, level: int, sample_index) -> Array:
    with np.errstate(over="ignore"):
        k = _mix64(_as_u64(seed) + _GOLDEN)
        k = _mix64(k ^ _mix64(_as_u64(level) + _GOLDEN * np.uint64(2)))
        k = _mix64(k ^ _mix64(_as_u64(sample_index) + _GOLDEN * np.uint64(3)))
    return np.atleast_1d(k)


@dataclass
class RngStream:
    """A batch of independent normal streams, one per sample index.

    ``sample_index`` may be a scalar or an array; draws come back with a
    leading axis over the samples. ``position`` is the counter state: it
    only advances, so replaying a stream means building a fresh one.
    """

    seed: int
    level: int
    sample_index: Array
    position: int = 0

    def __post_init__(self):
        self.sample_index = np.atleast_1d(np.asarray(self.sample_index, dtype=np.int64))
        self._keys = _stream_keys(self.seed, self.level, self.sample_index)

    @property
    def n_samples(self) -> int:
        return self._keys.shape[0]

    def uniforms(self, k: int) -> Array:
        """Next ``k`` uniforms on the open interval (0, 1), shape ``(n, k)``."""
        ctr = np.arange(self.position + 1, self.position + k + 1, dtype=np.uint64)
        self.position += k
        with np.errstate(over="ignore"):
            bits = _mix64(self._keys[:, None] + ctr[None, :] * _GOLDEN)
        return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def normals(self, k: int) -> Array:
        """Next ``k`` standard normals, shape ``(n, k)``."""
        return ndtri(self.uniforms(k))


def make_stream(seed: int, level: int, sample_index) -> RngStream:
    return RngStream(int(seed), int(level), sample_index)


@dataclass(frozen=True)
class CoupledIncrements:
    """Brownian data for one coarse step of length ``h``.

    ``delta_first`` and ``delta_second`` are the increments over the two
    half-steps, each shaped ``(n, m)``. The coarse increment is always their
    sum, never sampled on its own.
    """

    h: float
    delta_first: Array
    delta_second: Array

    @property
    def coarse(self) -> Array:
        return self.delta_first + self.delta_second


def sample_coupled(stream: RngStream, h: float, m: int) -> CoupledIncrements:
    """Draw the two half-step increments of one coarse step for every sample."""
    if not h > 0:
        raise ValueError(f"timestep must be positive, got {h}")
    z = stream.normals(2 * m) * np.sqrt(0.5 * h)
    return CoupledIncrements(h, z[:, :m], z[:, m:])


def antithetic_view(inc: CoupledIncrements) -> CoupledIncrements:
    """Swap the two half-step increments; the coarse sum is unchanged."""
    return CoupledIncrements(inc.h, inc.delta_second, inc.delta_first)


def area_proxy(dw: Array, tau: float) -> Array:
    """``Pi[j1, j2] = (dw_j1 dw_j2 - [j1 == j2] tau) / 2`` over an interval of length ``tau``.

    ``dw`` has shape ``(..., m)``; the result has shape ``(..., m, m)``. It is
    the symmetric part of the iterated Ito integral, i.e. the full Milstein
    term with the Levy area set to zero.
    """
    if not tau > 0:
        raise ValueError(f"interval length must be positive, got {tau}")
    dw = np.asarray(dw, dtype=float)
    m = dw.shape[-1]
    return 0.5 * (dw[..., :, None] * dw[..., None, :] - tau * np.eye(m))
