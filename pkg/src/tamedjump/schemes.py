"""One-step maps and a single-path driver.

All step functions accept either one state of shape ``(d,)`` with a
single-path :class:`~tamedjump.core.Increment`, or a batch ``(P, d)`` with
batched increments.  Jump terms are explicit in every scheme, including
the two implicit ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .core import Increment, JumpDiffusionProblem, NoiseStream, next_increment

# a component beyond this magnitude counts as blown up
OVERFLOW_LIMIT = 1e150

NEWTON_MAX_ITER = 50
FIXED_POINT_MAX_ITER = 200
RESIDUAL_TOL = 1e-12


class NonConvergence(RuntimeError):
    pass


class Scheme(str, Enum):
    EM = "EM"
    NCTS = "NCTS"
    STS = "STS"
    BE = "BE"
    SSBE = "SSBE"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).upper())
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}; choose from "
                             + ", ".join(s.value for s in cls)) from None


def _norm(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1, keepdims=True)


def tame(dt: float, fx: np.ndarray) -> np.ndarray:
    """``dt f / (1 + dt |f|)``; its norm is below both 1 and ``dt |f|``."""
    return dt * fx / (1.0 + dt * _norm(fx))


def noise_terms(problem: JumpDiffusionProblem, x: np.ndarray, inc: Increment) -> np.ndarray:
    gx = problem.diffusion(x)
    dW = np.asarray(inc.dW, dtype=float)
    dN = np.asarray(inc.dN, dtype=float)
    return (gx @ dW[..., None])[..., 0] + problem.jump(x) * dN[..., None]


def step_em(problem, x, inc):
    return x + problem.f(x) * inc.dt + noise_terms(problem, x, inc)


def step_ncts(problem, x, inc):
    return x + tame(inc.dt, problem.f(x)) + noise_terms(problem, x, inc)


def step_sts(problem, y, inc):
    if not problem.is_split:
        raise ValueError("the semi-tamed scheme needs a split drift (drift_u, drift_v)")
    return (y + problem.drift_u(y) * inc.dt + tame(inc.dt, problem.drift_v(y))
            + noise_terms(problem, y, inc))


def _fd_jacobian(fn, z):
    d = z.shape[-1]
    cols = []
    for j in range(d):
        h = 1e-7 * (1.0 + np.abs(z[..., j]))
        e = np.zeros_like(z)
        e[..., j] = h
        cols.append((fn(z + e) - fn(z - e)) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-1)


def solve_drift_implicit(problem: JumpDiffusionProblem, rhs: np.ndarray,
                         dt: float) -> np.ndarray:
    """Root of ``z - dt f(z) = rhs`` for every row of ``rhs``.

    Damped Newton (step halving while the residual grows) with at most
    ``NEWTON_MAX_ITER`` iterations, then a fixed-point sweep for any row
    still unconverged.  Rows of ``rhs`` that are not finite are passed
    through untouched so the caller can flag them.
    """
    rhs = np.asarray(rhs, dtype=float)
    f = problem.f
    jac = problem.drift_jacobian
    eye = np.eye(rhs.shape[-1])

    def residual(z):
        r = z - dt * f(z) - rhs
        return r, np.linalg.norm(r, axis=-1)

    with np.errstate(all="ignore"):
        finite = np.all(np.isfinite(rhs), axis=-1)
        tol = RESIDUAL_TOL * np.maximum(1.0, np.linalg.norm(rhs, axis=-1))
        z = np.where(finite[..., None], rhs, 0.0)
        r, rn = residual(z)
        done = ~finite | (rn <= tol)
        for _ in range(NEWTON_MAX_ITER):
            if done.all():
                break
            J = eye - dt * (jac(z) if jac is not None else _fd_jacobian(f, z))
            try:
                delta = np.linalg.solve(J, r[..., None])[..., 0]
            except np.linalg.LinAlgError:
                break
            damp = np.ones(rn.shape)
            for _ in range(30):
                z_new = z - damp[..., None] * delta
                r_new, rn_new = residual(z_new)
                worse = ~done & ~(rn_new <= rn)
                if not worse.any():
                    break
                damp = np.where(worse, 0.5 * damp, damp)
            z = np.where(done[..., None], z, z_new)
            r = np.where(done[..., None], r, r_new)
            rn = np.where(done, rn, rn_new)
            done = done | (rn <= tol)
        if not done.all():
            for _ in range(FIXED_POINT_MAX_ITER):
                z_new = rhs + dt * f(z)
                z = np.where(done[..., None], z, z_new)
                r, rn = residual(z)
                done = done | (rn <= tol)
                if done.all():
                    break
    if not done.all():
        raise NonConvergence(f"implicit drift solve failed for {np.count_nonzero(~done)} state(s) "
                             f"at dt={dt}")
    return np.where(finite[..., None], z, rhs)


def step_be(problem, x, inc):
    rhs = x + noise_terms(problem, x, inc)
    return solve_drift_implicit(problem, rhs, inc.dt)


def step_ssbe(problem, x, inc):
    y_star = solve_drift_implicit(problem, x, inc.dt)
    return y_star + noise_terms(problem, y_star, inc)


STEPPERS = {
    Scheme.EM: step_em,
    Scheme.NCTS: step_ncts,
    Scheme.STS: step_sts,
    Scheme.BE: step_be,
    Scheme.SSBE: step_ssbe,
}


def step(problem, scheme, x, inc):
    return STEPPERS[Scheme.parse(scheme)](problem, x, inc)


def is_overflowed(x: np.ndarray) -> np.ndarray:
    """True where a state (last axis) has a non-finite or huge component."""
    with np.errstate(invalid="ignore"):
        return ~np.all(np.abs(x) <= OVERFLOW_LIMIT, axis=-1)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    # step index of the first blown-up state; it is not stored in `states`
    overflow_step: Optional[int] = None

    @property
    def overflowed(self) -> bool:
        return self.overflow_step is not None


def check_steps(problem: JumpDiffusionProblem, dt: float, n_steps: int):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    if n_steps * dt > problem.horizon + 1e-9:
        raise ValueError(f"{n_steps} steps of {dt} overrun the horizon {problem.horizon}")


def simulate_path(problem: JumpDiffusionProblem, scheme, dt: float, n_steps: int,
                  stream: NoiseStream) -> Trajectory:
    scheme = Scheme.parse(scheme)
    check_steps(problem, dt, n_steps)
    stepper = STEPPERS[scheme]
    states = [problem.x0.copy()]
    overflow_step = None
    x = problem.x0
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            inc = next_increment(stream, problem.wiener_dim, problem.lam, dt)
            x = stepper(problem, x, inc)
            if is_overflowed(x):
                overflow_step = n + 1
                break
            states.append(x)
    states = np.array(states)
    return Trajectory(np.arange(len(states)) * dt, states, overflow_step)
