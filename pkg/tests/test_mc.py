import math

import numpy as np
import pytest

from rissec import _kernels
from rissec.analysis import effective_correlations
from rissec.channel import PhaseVector, crandn, sample_realization
from rissec.errors import DomainError
from rissec.mc import (an_precoder, mrt_precoder, run_montecarlo, statistical_zeta2,
                       zf_precoder)

from conftest import make_stats

THETA = np.random.default_rng(5).uniform(0, 2 * np.pi, 16)


class TestPrecoders:
    def test_an_null_space(self):
        H = crandn(np.random.default_rng(0), (4, 10, 3))
        V = an_precoder(H)
        assert V.shape == (4, 10, 7)
        assert np.max(np.abs(np.conj(np.swapaxes(H, 1, 2)) @ V)) < 1e-12
        np.testing.assert_allclose(np.conj(np.swapaxes(V, 1, 2)) @ V, np.broadcast_to(np.eye(7), (4, 7, 7)),
                                   atol=1e-12)

    def test_an_needs_surplus(self):
        with pytest.raises(DomainError):
            an_precoder(np.ones((3, 3)))

    def test_statistical_mrt_average_power(self, stats):
        ph = PhaseVector(THETA)
        r = sample_realization(stats, ph, np.random.default_rng(1), trials=5000)
        W = mrt_precoder(r.h_user, statistical_zeta2(stats, ph)).W
        assert np.mean(np.sum(np.abs(W) ** 2, axis=(1, 2))) == pytest.approx(3.0, rel=0.02)

    def test_per_realization_mrt_power(self):
        H = crandn(np.random.default_rng(0), (5, 10, 3))
        W = mrt_precoder(H).W
        np.testing.assert_allclose(np.sum(np.abs(W) ** 2, axis=(1, 2)), 3.0)

    def test_zf_diagonalizes(self):
        H = crandn(np.random.default_rng(2), (4, 10, 3))
        W = zf_precoder(H).W
        G = np.conj(np.swapaxes(H, 1, 2)) @ W
        off = G - G * np.eye(3)
        assert np.max(np.abs(off)) < 1e-12
        np.testing.assert_allclose(np.sum(np.abs(W) ** 2, axis=(1, 2)), 3.0)

    def test_zf_single_user_is_mrt(self):
        H = crandn(np.random.default_rng(3), (4, 10, 1))
        np.testing.assert_allclose(zf_precoder(H).W, mrt_precoder(H).W, atol=1e-12)


class TestWishartOracle:
    def test_eve_quadratic_form_mean(self):
        # with i.i.d. Eve channels, H_E^H V V^H H_E is complex Wishart with M-K degrees
        # of freedom, independent of H_E^H w; E{Y^-1} = I / (M - K - M_E)
        M, K, M_E, T = 16, 3, 4, 20000
        rng = np.random.default_rng(0)
        H = crandn(rng, (T, M, K))
        W = H / np.linalg.norm(H[:, :, :1], axis=1, keepdims=True)
        He = crandn(rng, (T, M, M_E))
        _, _, eve, _ = _kernels.trial_statistics(H[:, :, 0], H, W, He, 0)
        assert np.mean(eve) == pytest.approx(M_E / (M - K - M_E), rel=0.05)

    def test_leakage_mean(self):
        M, K, T = 16, 3, 5000
        rng = np.random.default_rng(1)
        H = crandn(rng, (T, M, K))
        h = crandn(rng, (T, M))
        _, leak, _, _ = _kernels.trial_statistics(h, H, H, crandn(rng, (T, M, 2)), 0)
        assert np.mean(leak) == pytest.approx(M - K, rel=0.02)


class TestRunMontecarlo:
    def test_signal_mean_matches_statistics(self, stats):
        # E{h_k^H w_k} = zeta tr(R_k) under statistical MRT
        ph = PhaseVector(THETA)
        res = run_montecarlo(stats, ph, 0.5, 0, trials=4000, seed=3)
        eff = effective_correlations(stats, ph)
        trk = np.trace(eff.R_user[0]).real
        p = 0.5 * stats.dims.P / 3
        expected = p * statistical_zeta2(stats, ph) * trk ** 2
        assert res.user.components["signal"] == pytest.approx(expected, rel=0.05)

    def test_reproducible_and_thread_invariant(self, stats):
        a = run_montecarlo(stats, THETA, 0.5, 1, trials=250, seed=9)
        b = run_montecarlo(stats, THETA, 0.5, 1, trials=250, seed=9, threads=4)
        assert a == b

    def test_seed_changes_result(self, stats):
        a = run_montecarlo(stats, THETA, 0.5, 1, trials=200, seed=1)
        b = run_montecarlo(stats, THETA, 0.5, 1, trials=200, seed=2)
        assert a.user.mean != b.user.mean

    def test_xi_zero(self, stats):
        res = run_montecarlo(stats, THETA, 0.0, 0, trials=50)
        assert res.user.mean == 0.0 and res.eve.mean == 0.0 and res.secrecy.mean == 0.0

    def test_xi_one(self, stats):
        res = run_montecarlo(stats, THETA, 1.0, 0, trials=50)
        assert math.isinf(res.eve.mean) and res.secrecy.mean == 0.0

    def test_eve_noise_lowers_capacity(self, stats):
        a = run_montecarlo(stats, THETA, 0.5, 0, trials=200, seed=4)
        b = run_montecarlo(stats, THETA, 0.5, 0, trials=200, seed=4, sigma2_eve=1.0)
        assert b.eve.mean < a.eve.mean
        assert b.user.mean == a.user.mean

    def test_single_antenna_eve(self):
        st = make_stats(2, M_E=1)
        res = run_montecarlo(st, THETA, 0.5, 0, trials=300, seed=0)
        assert math.isfinite(res.eve.mean) and res.eve.discarded == 0

    def test_confidence_interval_shrinks(self, stats):
        a = run_montecarlo(stats, THETA, 0.5, 0, trials=200, seed=5)
        b = run_montecarlo(stats, THETA, 0.5, 0, trials=3200, seed=5)
        assert b.user.half_width < a.user.half_width
        assert b.eve.half_width < a.eve.half_width / 2

    def test_imperfect_csi_lowers_rate(self, stats):
        a = run_montecarlo(stats, THETA, 0.5, 0, trials=2000, seed=6)
        b = run_montecarlo(stats, THETA, 0.5, 0, trials=2000, seed=6, tau=0.7)
        assert b.user.mean < a.user.mean

    def test_zf_runs(self, stats):
        res = run_montecarlo(stats, THETA, 0.5, 0, trials=100, precoder="zf")
        assert res.user.mean > 0

    @pytest.mark.parametrize("kw", [dict(trials=1), dict(xi=2.0), dict(precoder="foo"),
                                    dict(normalization="x"), dict(k=5)])
    def test_argument_checks(self, stats, kw):
        args = dict(phases=THETA, xi=0.5, k=0, trials=10)
        args.update(kw)
        with pytest.raises(DomainError):
            run_montecarlo(stats, **args)
