"""Problem definitions, noise increments and the per-path seeding contract.

Every random quantity in the package is drawn from a :class:`NoiseStream`,
a Philox counter-based generator keyed by ``(master_seed, path_index)``.
A stream only ever hands out open-interval uniforms, one 64-bit word per
uniform, and each step consumes exactly ``m + 1`` of them (``m`` for the
Brownian increment, then one for the Poisson count).  Drawing a whole
increment table at once therefore yields the same numbers as drawing step
by step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import poisson

ArrayFn = Callable[[np.ndarray], np.ndarray]

_MASK64 = (1 << 64) - 1
_HALF_ULP = 2.0 ** -54
# sequential-search inversion is used up to this mean
_INVERSION_MAX_MEAN = 10.0
_PROBE_POINTS = 32


class NoiseStream:
    """Reproducible uniform source for one Monte Carlo path.

    Single-owner mutable state: do not share one stream between threads.
    """

    def __init__(self, master_seed: int, path_index: int):
        if path_index < 0:
            raise ValueError("path_index must be nonnegative")
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        key = np.array([self.master_seed & _MASK64, self.path_index], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.counter = 0

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniforms in the open interval (0, 1)."""
        self.counter += n
        # random() returns k * 2**-53; shifting by half a step keeps 0 out
        return self._gen.random(n) + _HALF_ULP

    def __repr__(self):
        return (f"NoiseStream(master_seed={self.master_seed}, "
                f"path_index={self.path_index}, counter={self.counter})")


def derive_path_stream(master_seed: int, path_index: int) -> NoiseStream:
    return NoiseStream(master_seed, path_index)


def gaussian_from_uniform(u: np.ndarray, dt: float) -> np.ndarray:
    return ndtri(u) * math.sqrt(dt)


def poisson_from_uniform(u, mean: float) -> np.ndarray:
    """Poisson(mean) counts by inversion of the CDF at ``u``.

    Sequential search from zero for small means; the scipy quantile
    function for large ones.
    """
    u = np.asarray(u, dtype=float)
    if mean < 0 or not math.isfinite(mean):
        raise ValueError(f"Poisson mean must be finite and >= 0, got {mean}")
    if mean == 0.0:
        return np.zeros(u.shape, dtype=np.int64)
    if mean > _INVERSION_MAX_MEAN:
        return poisson.ppf(u, mean).astype(np.int64)
    k = np.zeros(u.shape, dtype=np.int64)
    p = math.exp(-mean)
    cdf = p
    j = 0
    while True:
        active = u > cdf
        if not active.any():
            break
        k += active
        j += 1
        p *= mean / j
        if p == 0.0:
            break
        cdf += p
    return k


def brownian_increment(stream: NoiseStream, m: int, dt: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return gaussian_from_uniform(stream.uniforms(m), dt)


def poisson_increment(stream: NoiseStream, lam: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return int(poisson_from_uniform(stream.uniforms(1), lam * dt)[0])


def compensate(dN, lam: float, dt: float):
    """Compensated Poisson increment ``dN - lam * dt`` (zero mean)."""
    return dN - lam * dt


@dataclass(frozen=True)
class Increment:
    """Noise over one step.

    ``dW`` has shape ``(m,)`` and ``dN`` is a scalar for a single path; for a
    batch of ``P`` paths they are ``(P, m)`` and ``(P,)``.
    """

    dW: np.ndarray
    dN: np.ndarray
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if np.any(np.asarray(self.dN) < 0):
            raise ValueError("Poisson counts must be nonnegative")


def next_increment(stream: NoiseStream, m: int, lam: float, dt: float) -> Increment:
    dW = brownian_increment(stream, m, dt)
    dN = poisson_increment(stream, lam, dt)
    return Increment(dW, np.int64(dN), dt)


def increment_table(stream: NoiseStream, m: int, lam: float, dt: float,
                    n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """All increments of one path: ``dW`` of shape (n_steps, m), ``dN`` (n_steps,).

    Bit-identical to calling :func:`next_increment` ``n_steps`` times.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = stream.uniforms(n_steps * (m + 1)).reshape(n_steps, m + 1)
    return gaussian_from_uniform(u[:, :m], dt), poisson_from_uniform(u[:, m], lam * dt)


@dataclass(frozen=True)
class LinearTestParams:
    """Scalars of ``dX = aX dt + bX dW + cX dN`` with jump intensity ``lam``."""

    a: float
    b: float
    c: float
    lam: float

    def __post_init__(self):
        for name in ("a", "b", "c", "lam"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True, eq=False)
class JumpDiffusionProblem:
    """``dX = f(X) dt + g(X) dW + h(X) dN`` on ``[0, horizon]``.

    Coefficients act on arrays of shape ``(..., dim)``: ``drift`` and ``jump``
    return ``(..., dim)``, ``diffusion`` returns ``(..., dim, wiener_dim)``.
    The drift is given whole (``drift``), split as ``drift_u + drift_v``, or
    both; the split is checked against the whole drift on a probe grid.
    ``drift_jacobian`` is optional and returns ``(..., dim, dim)``; the
    implicit schemes fall back to finite differences without it.
    """

    diffusion: ArrayFn
    jump: ArrayFn
    lam: float
    x0: np.ndarray
    horizon: float
    drift: Optional[ArrayFn] = None
    drift_u: Optional[ArrayFn] = None
    drift_v: Optional[ArrayFn] = None
    wiener_dim: int = 1
    dim: Optional[int] = None
    drift_jacobian: Optional[ArrayFn] = None
    name: str = ""
    probe_error: float = field(default=0.0, init=False)

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.ndim != 1:
            raise ValueError("x0 must be a vector")
        object.__setattr__(self, "x0", x0)
        if self.dim is None:
            object.__setattr__(self, "dim", x0.size)
        if self.dim < 1 or self.dim != x0.size:
            raise ValueError(f"dim={self.dim} does not match x0 of size {x0.size}")
        if self.wiener_dim < 1:
            raise ValueError("wiener_dim must be >= 1")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be finite and nonnegative")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if (self.drift_u is None) != (self.drift_v is None):
            raise ValueError("split drift needs both drift_u and drift_v")
        if self.drift is None and self.drift_u is None:
            raise ValueError("no drift supplied")
        if self.drift is not None and self.is_split:
            self._check_split()

    @property
    def is_split(self) -> bool:
        return self.drift_u is not None

    def f(self, x: np.ndarray) -> np.ndarray:
        if self.drift is not None:
            return self.drift(x)
        return self.drift_u(x) + self.drift_v(x)

    def _check_split(self):
        rng = np.random.default_rng(0)
        probe = rng.standard_normal((_PROBE_POINTS, self.dim))
        err = np.linalg.norm(self.drift(probe) - self.drift_u(probe) - self.drift_v(probe),
                             axis=-1)
        scale = 1.0 + np.linalg.norm(self.drift(probe), axis=-1)
        worst = float(np.max(err / scale))
        object.__setattr__(self, "probe_error", worst)
        if not worst <= 1e-12:
            raise ValueError(f"drift != drift_u + drift_v on probe grid (error {worst:.3g})")
