"""Monte Carlo estimates of E|Y_n|^2 and exponential decay-rate fits.

Paths are split into fixed blocks of ``BLOCK_SIZE`` consecutive indices.
Each block is simulated as one vectorised batch and summarised by
per-step (count, mean, M2); the summaries are merged by a pairwise tree
over block order.  The partition never depends on the worker count, so
the result is bit-identical for any number of threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Increment, JumpDiffusionProblem, derive_path_stream, increment_table
from .schemes import STEPPERS, Scheme, check_steps, is_overflowed

log = logging.getLogger(__name__)

BLOCK_SIZE = 256


class AllPathsOverflowed(RuntimeError):
    pass


class InsufficientData(ValueError):
    pass


@dataclass
class MomentSeries:
    """Per-step second-moment estimates.

    ``overflowed[n]`` counts paths blown up at or before step ``n``; those
    paths are excluded from ``msq[n]`` and ``stderr[n]``.
    """

    scheme: Scheme
    dt: float
    n_paths: int
    master_seed: int
    steps: np.ndarray
    times: np.ndarray
    msq: np.ndarray
    stderr: np.ndarray
    overflowed: np.ndarray

    @property
    def overflow_count(self) -> int:
        return int(self.overflowed[-1]) if len(self.overflowed) else 0

    @property
    def points(self):
        return list(zip(self.steps.tolist(), self.times.tolist(),
                        self.msq.tolist(), self.stderr.tolist()))

    @classmethod
    def from_values(cls, msq, dt: float, scheme=Scheme.STS, n_paths: int = 1,
                    master_seed: int = 0) -> "MomentSeries":
        """Wrap a noiseless moment sequence (e.g. an exact recurrence)."""
        msq = np.asarray(msq, dtype=float)
        steps = np.arange(len(msq))
        return cls(Scheme.parse(scheme), dt, n_paths, master_seed, steps, steps * dt, msq,
                   np.zeros_like(msq), np.zeros(len(msq), dtype=np.int64))


@dataclass
class DecayFit:
    rate: float
    intercept: float
    residual: float
    window: tuple[int, int]


def _simulate_block(problem: JumpDiffusionProblem, scheme: Scheme, dt: float, n_steps: int,
                    master_seed: int, first: int, last: int):
    """Squared norms, shape (n_steps+1, P), NaN after a path blows up."""
    m = problem.wiener_dim
    dW = np.empty((last - first, n_steps, m))
    dN = np.empty((last - first, n_steps), dtype=np.int64)
    for row, i in enumerate(range(first, last)):
        dW[row], dN[row] = increment_table(derive_path_stream(master_seed, i), m, problem.lam,
                                           dt, n_steps)
    stepper = STEPPERS[scheme]
    x = np.broadcast_to(problem.x0, (last - first, problem.dim)).copy()
    sq = np.full((n_steps + 1, last - first), np.nan)
    sq[0] = np.sum(x * x, axis=-1)
    alive = np.ones(last - first, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            idx = np.flatnonzero(alive)
            if idx.size == 0:
                break
            inc = Increment(dW[idx, n], dN[idx, n], dt)
            y = stepper(problem, x[idx], inc)
            bad = is_overflowed(y)
            alive[idx[bad]] = False
            good = idx[~bad]
            x[good] = y[~bad]
            sq[n + 1, good] = np.sum(y[~bad] ** 2, axis=-1)
    return sq


def _summarise(sq: np.ndarray):
    count = np.sum(~np.isnan(sq), axis=1)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        mean = np.where(count > 0, np.nansum(sq, axis=1) / np.maximum(count, 1), 0.0)
        m2 = np.nansum((sq - mean[:, None]) ** 2, axis=1)
    return count, mean, m2


def _merge(a, b):
    # Chan et al. pairwise update of (count, mean, M2)
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        nn = np.maximum(n, 1)
        delta = mb - ma
        mean = np.where(n > 0, ma + delta * (nb / nn), 0.0)
        m2 = sa + sb + delta ** 2 * (na * nb / nn)
    return n, mean, m2


def _tree_reduce(parts):
    while len(parts) > 1:
        merged = [_merge(parts[i], parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            merged.append(parts[-1])
        parts = merged
    return parts[0]


def estimate_second_moments(problem: JumpDiffusionProblem, scheme, dt: float, n_steps: int,
                            n_paths: int, master_seed: int, threads: int = 1) -> MomentSeries:
    scheme = Scheme.parse(scheme)
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    check_steps(problem, dt, n_steps)
    blocks = [(lo, min(lo + BLOCK_SIZE, n_paths)) for lo in range(0, n_paths, BLOCK_SIZE)]

    def work(block):
        return _summarise(_simulate_block(problem, scheme, dt, n_steps, master_seed, *block))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    count, mean, m2 = _tree_reduce(parts)

    if np.any(count == 0):
        first_dead = int(np.argmax(count == 0))
        raise AllPathsOverflowed(f"{scheme.value} dt={dt}: every path blew up by step {first_dead}")
    with np.errstate(invalid="ignore", divide="ignore"):
        stderr = np.where(count > 1, np.sqrt(m2 / np.maximum(count - 1, 1) / count), np.nan)
    overflowed = (n_paths - count).astype(np.int64)
    if overflowed[-1]:
        log.warning("%s dt=%g: %d of %d paths overflowed and were excluded",
                    scheme.value, dt, overflowed[-1], n_paths)
    steps = np.arange(n_steps + 1)
    return MomentSeries(scheme, dt, n_paths, master_seed, steps, steps * dt,
                        mean, stderr, overflowed)


def default_window(series: MomentSeries) -> tuple[int, int]:
    """Skip the first 10% of steps and stop before the first overflow."""
    last = int(series.steps[-1])
    hit = np.flatnonzero(series.overflowed > 0)
    if hit.size:
        last = int(series.steps[hit[0]]) - 1
    return int(math.floor(0.1 * series.steps[-1])), last


def fit_decay_rate(series: MomentSeries, window: Optional[tuple[int, int]] = None) -> DecayFit:
    """Least-squares line through (t_n, ln msq_n); ``rate`` is minus the slope."""
    first, last = window if window is not None else default_window(series)
    sel = (series.steps >= first) & (series.steps <= last) & (series.msq > 0)
    if np.count_nonzero(sel) < 3:
        raise InsufficientData(f"need at least 3 positive points in steps [{first}, {last}]")
    t = series.times[sel]
    y = np.log(series.msq[sel])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    return DecayFit(rate=float(-slope), intercept=float(intercept),
                    residual=float(np.sqrt(np.mean(resid ** 2))), window=(first, last))
