import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import oracles
from ciasim.channel import (
    CsiQuality,
    draw_channel_set,
    draw_taps,
    estimate_channel_set,
    link_rng,
    noise_variance_for_snr,
    noisy_estimate,
    reference_received_power,
)
from ciasim.ofdm import OfdmParams


class TestDrawTaps:
    def test_single_tap_unit_variance(self, rng):
        draws = np.array([np.abs(draw_taps(0, rng)[0]) ** 2 for _ in range(100_000)])
        assert 0.99 <= draws.mean() <= 1.01

    def test_long_channel_unit_energy(self, rng):
        energies = [np.sum(np.abs(draw_taps(31, rng)) ** 2) for _ in range(10_000)]
        assert 0.99 <= np.mean(energies) <= 1.01

    @pytest.mark.parametrize("order", [0, 4, 32])
    def test_normalization_across_orders(self, order, rng):
        energies = [np.sum(np.abs(draw_taps(order, rng)) ** 2) for _ in range(10_000)]
        assert abs(np.mean(energies) - 1.0) <= 0.01

    def test_seeded_determinism(self):
        a = draw_taps(5, link_rng((3, 1), 0, 0, 0))
        b = draw_taps(5, link_rng((3, 1), 0, 0, 0))
        assert_array_equal(a, b)

    def test_negative_order_rejected(self, rng):
        with pytest.raises(ValueError):
            draw_taps(-1, rng)


class TestDrawChannelSet:
    def test_link_counts(self):
        ch = draw_channel_set(2, 2, 4, (0, 0, 0))
        assert len(ch.h_pp) + len(ch.h_sp) + len(ch.h_ps) + len(ch.h_ss) == 12
        assert all(taps.size == 5 for taps in ch.h_pp.values())

    def test_adding_sbs_keeps_existing_links(self):
        small = draw_channel_set(2, 2, 3, (9, 0, 1))
        large = draw_channel_set(2, 5, 3, (9, 0, 1))
        for j in range(2):
            assert_array_equal(small.h_pp[j], large.h_pp[j])
        for key in small.h_sp:
            assert_array_equal(small.h_sp[key], large.h_sp[key])
        for key in small.h_ss:
            assert_array_equal(small.h_ss[key], large.h_ss[key])

    def test_trial_key_changes_draws(self):
        a = draw_channel_set(2, 2, 3, (9, 0, 1))
        b = draw_channel_set(2, 2, 3, (9, 0, 2))
        assert not np.allclose(a.h_pp[0], b.h_pp[0])

    def test_link_independence(self):
        # empirical cross-correlation between two different links
        first = np.empty(10_000, dtype=complex)
        second = np.empty(10_000, dtype=complex)
        for t in range(10_000):
            ch = draw_channel_set(1, 1, 0, (5, 0, t))
            first[t] = ch.h_pp[0][0]
            second[t] = ch.h_ss[0, 0][0]
        corr = np.abs(np.vdot(first, second)) / (
            np.linalg.norm(first) * np.linalg.norm(second)
        )
        assert corr <= 0.05

    def test_full_determinism(self):
        a = draw_channel_set(4, 3, 4, (11, 2, 7))
        b = draw_channel_set(4, 3, 4, (11, 2, 7))
        for key in a.h_sp:
            assert_array_equal(a.h_sp[key], b.h_sp[key])


class TestNoisyEstimate:
    def test_noiseless_limit(self, rng):
        taps = draw_taps(4, rng)
        csi = CsiQuality(rho=1.0, tau=1.0, coherence_time=10.0)
        est = noisy_estimate(taps, csi, 1e-12, rng)
        assert np.linalg.norm(est.error) <= 1e-5

    def test_mmse_error_variance(self, rng):
        # per-tap error variance sigma_h^2 sigma^2 / (rho tau sigma_h^2 + sigma^2)
        # equals 0.5 for l=0, rho*tau=1, sigma^2=1
        csi = CsiQuality(rho=1.0, tau=1.0, coherence_time=10.0)
        errors = np.array(
            [noisy_estimate(np.array([draw_taps(0, rng)[0]]), csi, 1.0, rng).error[0]
             for _ in range(100_000)]
        )
        assert abs(np.mean(np.abs(errors) ** 2) - 0.5) <= 0.01

    def test_reconstruction_identity(self, rng):
        # exact up to one floating-point rounding of the final addition
        csi = CsiQuality(rho=1.0, tau=8.0, coherence_time=100.0)
        for _ in range(50):
            taps = draw_taps(8, rng)
            est = noisy_estimate(taps, csi, 0.3, rng)
            assert_allclose(est.estimate + est.error, taps, rtol=0, atol=1e-15)
            assert_allclose(est.true_taps, est.estimate + est.error, rtol=0, atol=0)

    def test_error_shrinks_with_training(self, rng):
        taps = draw_taps(16, rng)
        norms = []
        for tau in [1.0, 10.0, 100.0, 1000.0]:
            csi = CsiQuality(rho=1.0, tau=tau, coherence_time=1000.0)
            errs = [
                np.linalg.norm(noisy_estimate(taps, csi, 0.5, rng).error)
                for _ in range(200)
            ]
            norms.append(np.mean(errs))
        assert norms == sorted(norms, reverse=True)

    def test_orthogonality_of_estimate_and_error(self, rng):
        csi = CsiQuality(rho=1.0, tau=2.0, coherence_time=10.0)
        est_vals = np.empty(10_000, dtype=complex)
        err_vals = np.empty(10_000, dtype=complex)
        for t in range(10_000):
            taps = draw_taps(0, rng)
            est = noisy_estimate(taps, csi, 1.0, rng)
            est_vals[t] = est.estimate[0]
            err_vals[t] = est.error[0]
        corr = np.abs(np.vdot(est_vals, err_vals)) / (
            np.linalg.norm(est_vals) * np.linalg.norm(err_vals)
        )
        assert corr <= 0.02

    def test_invalid_noise_rejected(self, rng):
        with pytest.raises(ValueError):
            noisy_estimate(np.ones(3), CsiQuality(), 0.0, rng)

    def test_invalid_training_window(self):
        with pytest.raises(ValueError):
            CsiQuality(rho=1.0, tau=0.0, coherence_time=10.0)
        with pytest.raises(ValueError):
            CsiQuality(rho=1.0, tau=11.0, coherence_time=10.0)


class TestEstimateChannelSet:
    def test_transmit_side_links_replaced(self):
        ch = draw_channel_set(2, 2, 3, (1, 0, 0))
        csi = CsiQuality(rho=1.0, tau=50.0, coherence_time=100.0)
        est = estimate_channel_set(ch, csi, 0.1, (1, 0, 0))
        for key in ch.h_sp:
            assert not np.allclose(est.h_sp[key], ch.h_sp[key])
        for j in ch.h_pp:
            assert_array_equal(est.h_pp[j], ch.h_pp[j])

    def test_context_key_gives_fresh_noise(self):
        ch = draw_channel_set(1, 1, 3, (1, 0, 0))
        csi = CsiQuality(rho=1.0, tau=50.0, coherence_time=100.0)
        a = estimate_channel_set(ch, csi, 0.1, (1, 0, 0), (7,))
        b = estimate_channel_set(ch, csi, 0.1, (1, 0, 0), (8,))
        c = estimate_channel_set(ch, csi, 0.1, (1, 0, 0), (7,))
        assert not np.allclose(a.h_ss[0, 0], b.h_ss[0, 0])
        assert_array_equal(a.h_ss[0, 0], c.h_ss[0, 0])


class TestNoiseCalibration:
    def test_snr_scaling(self):
        params = OfdmParams(16, 4, 4, 2)
        ref = reference_received_power(params, "linear", trials=50)
        assert_allclose(noise_variance_for_snr(0.0, params, trials=50), ref)
        assert_allclose(noise_variance_for_snr(30.0, params, trials=50), ref * 1e-3)

    def test_infinite_snr_rejected(self):
        params = OfdmParams(16, 4, 4, 2)
        with pytest.raises(ValueError):
            noise_variance_for_snr(np.inf, params)

    def test_log_mode_scaling(self):
        params = OfdmParams(16, 4, 4, 2)
        v0 = noise_variance_for_snr(0.0, params, mode="log", trials=50)
        v30 = noise_variance_for_snr(30.0, params, mode="log", trials=50)
        assert_allclose(v0 / v30, 1e3)

    def test_reference_against_independent_monte_carlo(self, rng):
        # oracle: rebuild the kernel-confined direct link with dense
        # matrices on fresh draws and compare mean row powers
        params = OfdmParams(32, 8, 8, 4)
        ref = reference_received_power(params, "linear", trials=400)
        f = oracles.dft(32)
        b = oracles.cp_remove(32, 8)
        filters = oracles.user_filters(32, 4)
        total = 0.0
        trials = 400
        for _ in range(trials):
            t_sp = np.zeros((32, 40), dtype=complex)
            for j in range(4):
                taps = (rng.standard_normal(9) + 1j * rng.standard_normal(9)) / np.sqrt(18)
                t_sp += filters[j] @ f @ b @ oracles.circulant(taps, 40)
            _, _, vh = np.linalg.svd(t_sp)
            kernel = vh[32:].conj().T
            taps = (rng.standard_normal(9) + 1j * rng.standard_normal(9)) / np.sqrt(18)
            t_ss = f @ b @ oracles.circulant(taps, 40) @ kernel
            total += np.mean(np.sum(np.abs(t_ss) ** 2, axis=1))
        independent = total / trials
        assert abs(independent - ref) / ref <= 0.05
