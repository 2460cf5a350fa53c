import numpy as np
import pytest
from numpy.testing import assert_allclose

import oracles
from ciasim.channel import draw_channel_set, draw_taps
from ciasim.metrics import (
    effective_sinr,
    primary_sinr_imperfect,
    primary_sinr_perfect,
    secondary_sinr,
    spectral_efficiency,
    tier_se_imperfect,
    tier_se_perfect,
)
from ciasim.ofdm import OfdmParams, SubcarrierAllocation, dft_matrix
from ciasim.precoder import (
    CascadedPrecoder,
    cascade,
    cia_a_outer,
    equivalent_secondary_channel,
    aggregate_interference_matrix,
    null_space_precoder,
)

PARAMS = OfdmParams(8, 2, 2, 2)


def perfect_precoders(channels, theta, params):
    precoders = []
    for k in range(channels.n_sbs):
        t_sp = aggregate_interference_matrix(channels.sp_row(k), params)
        inner = null_space_precoder(t_sp)
        direct = equivalent_secondary_channel(channels.h_ss[k, k], inner, params)
        precoders.append(cascade(inner, cia_a_outer(direct, theta)))
    return precoders


class TestPrimarySinrPerfect:
    def test_unit_channel(self):
        sinr = primary_sinr_perfect(np.array([1.0]), np.ones(8), 1.0, PARAMS)
        assert_allclose(sinr, np.ones(8))

    def test_power_and_gain_scaling(self):
        # power 4 and gain magnitude 0.5 cancel at unit noise
        sinr = primary_sinr_perfect(np.array([0.5]), 4.0 * np.ones(8), 1.0, PARAMS)
        assert_allclose(sinr, np.ones(8))

    def test_matches_dense_expression(self, rng):
        taps = draw_taps(2, rng)
        powers = rng.uniform(0.5, 2.0, 8)
        sinr = primary_sinr_perfect(taps, powers, 0.7, PARAMS)
        f = oracles.dft(8)
        dense = (
            f
            @ oracles.cp_remove(8, 2)
            @ oracles.circulant(taps, 10)
            @ oracles.cp_insert(8, 2)
            @ np.linalg.inv(f)
        )
        assert_allclose(sinr, powers * np.abs(np.diag(dense)) ** 2 / 0.7, atol=1e-12)

    def test_invalid_noise(self):
        with pytest.raises(ValueError):
            primary_sinr_perfect(np.array([1.0]), np.ones(8), 0.0, PARAMS)


class TestPrimarySinrImperfect:
    def test_reduces_to_perfect_with_true_csi(self, rng):
        channels = draw_channel_set(2, 2, 2, (0, 0, 0))
        precoders = perfect_precoders(channels, 2, PARAMS)
        rows = primary_sinr_imperfect(channels, precoders, np.ones(8), 0.5, PARAMS)
        allocation = SubcarrierAllocation.contiguous(PARAMS)
        for j in range(2):
            ideal = primary_sinr_perfect(channels.h_pp[j], np.ones(8), 0.5, PARAMS)
            idx = allocation.blocks[j]
            assert_allclose(rows[j, idx], ideal[idx], rtol=1e-9)
            off = np.setdiff1d(np.arange(8), idx)
            assert_allclose(rows[j, off], 0.0)

    def test_silent_secondary_equals_perfect(self, rng):
        channels = draw_channel_set(2, 2, 2, (0, 0, 1))
        precoders = perfect_precoders(channels, 2, PARAMS)
        silent = [CascadedPrecoder(p.matrix, np.zeros_like(p.powers)) for p in precoders]
        rows = primary_sinr_imperfect(channels, silent, np.ones(8), 0.5, PARAMS)
        allocation = SubcarrierAllocation.contiguous(PARAMS)
        for j in range(2):
            ideal = primary_sinr_perfect(channels.h_pp[j], np.ones(8), 0.5, PARAMS)
            idx = allocation.blocks[j]
            assert_allclose(rows[j, idx], ideal[idx], rtol=1e-12)

    def test_crafted_leakage(self):
        # single SBS whose leakage lands only on subcarrier i with power beta
        params = OfdmParams(4, 2, 1, 1)
        channels = draw_channel_set(1, 1, 1, (2, 0, 0))
        channels.h_sp[0, 0] = np.array([1.0])  # identity interference channel
        i, beta, sigma = 1, 0.8, 0.3
        f_inv = np.linalg.inv(dft_matrix(4))
        a = oracles.cp_insert(4, 2)
        column = np.sqrt(beta) * (a @ f_inv[:, i])
        prec = CascadedPrecoder(column[:, None], np.ones(1))
        rows = primary_sinr_imperfect(channels, [prec], np.ones(4), sigma, params)
        gains = np.abs(np.fft.fft(channels.h_pp[0], 4)) ** 2
        assert_allclose(rows[0, i], gains[i] / (beta + sigma), rtol=1e-9)


class TestSecondarySinr:
    def test_single_pair_no_interference(self, rng):
        channels = draw_channel_set(2, 1, 2, (3, 0, 0))
        precoders = perfect_precoders(channels, 2, PARAMS)
        sinr = secondary_sinr(0, channels, precoders, np.ones(8), 0.0, 0.25, PARAMS)
        rows = equivalent_secondary_channel(channels.h_ss[0, 0], precoders[0].matrix, PARAMS)
        expected = np.sum(np.abs(rows) ** 2, axis=1) / 0.25
        assert_allclose(sinr, expected, rtol=1e-9)

    def test_alpha_shifts_denominator_by_unit(self):
        channels = draw_channel_set(2, 1, 2, (3, 0, 1))
        channels.h_ps[0] = np.array([1.0])  # unit macro interference gains
        precoders = perfect_precoders(channels, 2, PARAMS)
        zero = secondary_sinr(0, channels, precoders, np.ones(8), 0.0, 0.25, PARAMS)
        one = secondary_sinr(0, channels, precoders, np.ones(8), 1.0, 0.25, PARAMS)
        rows = equivalent_secondary_channel(channels.h_ss[0, 0], precoders[0].matrix, PARAMS)
        num = np.sum(np.abs(rows) ** 2, axis=1)
        assert_allclose(num / one - num / zero, np.ones(8), atol=1e-9)

    def test_matches_dense_oracle(self, rng):
        channels = draw_channel_set(2, 2, 2, (4, 0, 0))
        precoders = perfect_precoders(channels, 2, PARAMS)
        z_list = [p.matrix for p in precoders]
        p_list = [p.powers for p in precoders]
        _, expected = oracles.dense_trial_sinrs(
            channels, z_list, p_list, np.ones(8), 0.7, 0.45, 8, 2
        )
        for k in range(2):
            got = secondary_sinr(k, channels, precoders, np.ones(8), 0.7, 0.45, PARAMS)
            assert_allclose(got, expected[k], rtol=1e-9)

    def test_alpha_zero_dominates_alpha_one(self, rng):
        channels = draw_channel_set(2, 2, 2, (4, 0, 2))
        precoders = perfect_precoders(channels, 2, PARAMS)
        zero = secondary_sinr(0, channels, precoders, np.ones(8), 0.0, 0.45, PARAMS)
        one = secondary_sinr(0, channels, precoders, np.ones(8), 1.0, 0.45, PARAMS)
        assert np.all(zero >= one)

    def test_alpha_out_of_range(self, rng):
        channels = draw_channel_set(2, 1, 2, (3, 0, 0))
        precoders = perfect_precoders(channels, 2, PARAMS)
        with pytest.raises(ValueError):
            secondary_sinr(0, channels, precoders, np.ones(8), 1.5, 0.25, PARAMS)


class TestSpectralEfficiency:
    def test_unit_sinr(self):
        params = OfdmParams(128, 32, 32, 4)
        assert_allclose(spectral_efficiency(np.ones(128), params), 0.8)

    def test_zero_sinr(self):
        assert spectral_efficiency(np.zeros(8), PARAMS) == 0.0

    def test_example_values(self):
        # SINR (3, 15) over a 4-sample block gives (log2(4) + log2(16)) / 4 = 1.5;
        # OfdmParams requires N > L, so rebase from the valid N=2, L=1 block.
        params = OfdmParams(2, 1, 1, 1)
        se = spectral_efficiency(np.array([3.0, 15.0]), params)
        assert_allclose(se, 2.0)
        assert_allclose(se * params.block_len / 4, 1.5)

    def test_monotone_in_sinr(self, rng):
        sinr = rng.uniform(0, 5, 8)
        base = spectral_efficiency(sinr, PARAMS)
        bumped = sinr.copy()
        bumped[3] += 1.0
        assert spectral_efficiency(bumped, PARAMS) > base

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            spectral_efficiency(np.array([-0.1]), PARAMS)


class TestEffectiveSinr:
    def test_substitution_values(self):
        assert_allclose(effective_sinr(1.0, 1.0), 1.0 / 3.0)
        assert_allclose(effective_sinr(10.0, 10.0), 1000.0 / 111.0)
        assert effective_sinr(0.0, 5.0) == 0.0

    def test_always_below_input(self):
        for s in [0.01, 1.0, 10.0, 1e3]:
            for tau in [0.5, 1.0, 10.0, 100.0]:
                assert effective_sinr(s, tau) < s

    def test_monotone_in_tau_and_sinr(self):
        taus = np.linspace(0.5, 300, 40)
        values = [effective_sinr(2.0, t) for t in taus]
        assert np.all(np.diff(values) > 0)
        sinrs = np.linspace(0.1, 50, 40)
        values = [effective_sinr(s, 8.0) for s in sinrs]
        assert np.all(np.diff(values) > 0)

    def test_invalid_tau(self):
        with pytest.raises(ValueError):
            effective_sinr(1.0, 0.0)


class TestTierRates:
    def test_per_user_sums_to_tier(self, rng):
        primary = rng.uniform(0, 3, (2, 8))
        secondary = rng.uniform(0, 3, (3, 8))
        rates = tier_se_perfect(primary, secondary, PARAMS)
        assert_allclose(rates.per_mue.sum(), rates.primary_se)
        assert_allclose(rates.per_sue.sum(), rates.secondary_se)

    def test_zero_transmission_window(self):
        rates = tier_se_imperfect(np.ones((1, 8)), np.ones((1, 8)), 10.0, 10.0, PARAMS)
        assert rates.primary_se == 0.0
        assert rates.secondary_se == 0.0

    def test_single_user_substitution(self):
        # one user, SINR 1 on both subcarriers of an N=2, L=2 grid:
        # 0.5 * (1/4) * 2 * log2(1 + 1/3)
        params = OfdmParams(4, 2, 2, 1)
        sinr = np.zeros((1, 4))
        sinr[0, :2] = 1.0
        rates = tier_se_imperfect(sinr, np.zeros((1, 4)), 1.0, 2.0, params)
        scale = 6 / 4  # rebase the (N + L) normalization to the 4-sample block
        assert_allclose(rates.primary_se * scale, 0.5 * 0.25 * 2 * np.log2(4 / 3))

    def test_prelog_limit_recovers_perfect_share(self):
        # large tau at fixed tau / T: effective SINR converges to SINR
        perfect = tier_se_perfect(np.full((1, 8), 4.0), np.zeros((1, 8)), PARAMS)
        imperfect = tier_se_imperfect(
            np.full((1, 8), 4.0), np.zeros((1, 8)), 5000.0, 10000.0, PARAMS
        )
        assert_allclose(imperfect.primary_se, 0.5 * perfect.primary_se, rtol=1e-3)

    def test_primary_can_be_exempted(self):
        prim = np.full((1, 8), 2.0)
        sec = np.full((1, 8), 2.0)
        penalized = tier_se_imperfect(prim, sec, 2.0, 10.0, PARAMS)
        exempt = tier_se_imperfect(prim, sec, 2.0, 10.0, PARAMS, penalize_primary=False)
        assert exempt.primary_se > penalized.primary_se
        assert_allclose(exempt.secondary_se, penalized.secondary_se)

    def test_invalid_window(self):
        with pytest.raises(ValueError):
            tier_se_imperfect(np.ones((1, 8)), np.ones((1, 8)), 11.0, 10.0, PARAMS)
