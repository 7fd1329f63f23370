import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tamedjump.core import JumpDiffusionProblem, derive_path_stream
from tamedjump.montecarlo import (
    AllPathsOverflowed,
    InsufficientData,
    MomentSeries,
    _merge,
    _summarise,
    default_window,
    estimate_second_moments,
    fit_decay_rate,
)
from tamedjump.problems import LINEAR_PARAMS, linear_test_problem
from tamedjump.schemes import simulate_path
from tamedjump.stability import sts_linear_amplification


def noiseless(a=-1.0, horizon=1.0):
    return JumpDiffusionProblem(
        drift_u=lambda x: a * x, drift_v=lambda x: np.zeros_like(x),
        diffusion=lambda x: np.zeros(x.shape + (1,)), jump=lambda x: np.zeros_like(x),
        lam=0.0, x0=[1.0], horizon=horizon)


class TestEstimate:
    def test_deterministic_paths_have_zero_spread(self):
        s = estimate_second_moments(noiseless(), "STS", 0.1, 10, 300, 1)
        np.testing.assert_allclose(s.msq, 0.9 ** (2 * np.arange(11)), rtol=1e-14)
        np.testing.assert_allclose(s.stderr, 0.0, atol=1e-15)
        assert s.overflow_count == 0

    def test_zero_steps(self):
        s = estimate_second_moments(linear_test_problem(LINEAR_PARAMS), "NCTS", 0.01, 0, 10, 1)
        assert s.msq.tolist() == [1.0]
        assert s.points == [(0, 0.0, 1.0, 0.0)]

    def test_rejects_single_path(self):
        with pytest.raises(ValueError):
            estimate_second_moments(noiseless(), "EM", 0.1, 1, 1, 0)

    def test_horizon_enforced(self):
        with pytest.raises(ValueError):
            estimate_second_moments(noiseless(), "EM", 0.3, 4, 10, 0)

    def test_matches_single_path_driver(self):
        prob = linear_test_problem(LINEAR_PARAMS)
        n = 300  # spans two blocks
        s = estimate_second_moments(prob, "STS", 0.05, 20, n, 17)
        sq = np.array([simulate_path(prob, "STS", 0.05, 20, derive_path_stream(17, i)).states[:, 0] ** 2
                       for i in range(n)])
        np.testing.assert_allclose(s.msq, sq.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(s.stderr, sq.std(axis=0, ddof=1) / math.sqrt(n), rtol=1e-9)

    def test_sts_tracks_amplification(self):
        p = LINEAR_PARAMS
        n = 20_000
        s = estimate_second_moments(linear_test_problem(p), "STS", 0.01, 20, n, 3)
        expected = sts_linear_amplification(p, 0.01) ** s.steps
        assert np.all(np.abs(s.msq - expected) <= 4 * s.stderr + 1e-12)

    def test_unstable_regime_grows(self):
        prob = linear_test_problem(LINEAR_PARAMS, horizon=2.0)
        s = estimate_second_moments(prob, "STS", 0.2, 10, 10_000, 5)
        assert s.msq[-1] > 100

    @pytest.mark.parametrize("threads", [2, 4, 8])
    def test_thread_count_irrelevant(self, threads):
        prob = linear_test_problem(LINEAR_PARAMS)
        one = estimate_second_moments(prob, "BE", 0.02, 25, 1000, 4, threads=1)
        many = estimate_second_moments(prob, "BE", 0.02, 25, 1000, 4, threads=threads)
        assert one.msq.tobytes() == many.msq.tobytes()
        assert one.stderr.tobytes() == many.stderr.tobytes()

    def test_all_paths_overflow(self):
        # identical deterministic paths all explode under explicit Euler
        prob = JumpDiffusionProblem(
            drift=lambda x: -x ** 3, diffusion=lambda x: np.zeros(x.shape + (1,)),
            jump=lambda x: np.zeros_like(x), lam=0.0, x0=[10.0], horizon=1.0)
        with pytest.raises(AllPathsOverflowed):
            estimate_second_moments(prob, "EM", 0.1, 8, 5, 0)

    def test_partial_overflow(self, caplog):
        # EM far past its stability limit blows up on some paths only
        prob = JumpDiffusionProblem(
            drift=lambda x: -x ** 3, diffusion=lambda x: x[..., None],
            jump=lambda x: np.zeros_like(x), lam=0.0, x0=[2.0], horizon=10.0)
        s = estimate_second_moments(prob, "EM", 0.5, 20, 400, 2)
        assert 0 < s.overflow_count < 400
        assert np.all(np.diff(s.overflowed) >= 0)
        assert np.all(np.isfinite(s.msq))
        assert "overflowed" in caplog.text
        tamed = estimate_second_moments(prob, "NCTS", 0.5, 20, 400, 2)
        assert tamed.overflow_count == 0


class TestMerge:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40),
           st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40))
    def test_merge_equals_pooled(self, xs, ys):
        a = _summarise(np.array(xs)[None, :])
        b = _summarise(np.array(ys)[None, :])
        n, mean, m2 = _merge(a, b)
        pooled = np.array(xs + ys)
        assert n[0] == pooled.size
        assert mean[0] == pytest.approx(pooled.mean(), rel=1e-9, abs=1e-9)
        assert m2[0] == pytest.approx(((pooled - pooled.mean()) ** 2).sum(), rel=1e-7, abs=1e-6)

    def test_nan_rows_ignored(self):
        n, mean, m2 = _summarise(np.array([[1.0, np.nan, 3.0]]))
        assert (n[0], mean[0], m2[0]) == (2, 2.0, 2.0)


class TestFit:
    def test_pure_exponential(self):
        t = np.arange(101) * 0.01
        s = MomentSeries.from_values(np.exp(-0.5 * t), 0.01)
        fit = fit_decay_rate(s)
        assert fit.rate == pytest.approx(0.5, abs=1e-10)
        assert fit.residual < 1e-12
        assert fit.window == (10, 100)

    @pytest.mark.parametrize("dt", [0.01, 0.005, 0.0025])
    def test_amplification_sequence(self, dt):
        r = sts_linear_amplification(LINEAR_PARAMS, dt)
        n = int(round(1.0 / dt))
        s = MomentSeries.from_values(r ** np.arange(n + 1), dt)
        fit = fit_decay_rate(s)
        assert fit.rate == pytest.approx(-math.log(r) / dt, rel=1e-10)
        assert fit.residual < 1e-10

    def test_too_few_points(self):
        with pytest.raises(InsufficientData):
            fit_decay_rate(MomentSeries.from_values([1.0, 0.5], 0.1))
        with pytest.raises(InsufficientData):
            fit_decay_rate(MomentSeries.from_values([1.0, 0.0, 0.0, 0.0], 0.1), window=(0, 3))

    def test_window_stops_before_overflow(self):
        s = MomentSeries.from_values(np.exp(-np.arange(50) * 0.1), 0.1)
        s.overflowed[30:] = 1
        assert default_window(s) == (4, 29)
