"""SINR and spectral-efficiency computation for both tiers.

Rates use Gaussian-input log terms normalized by the full transmit block
length N + L. Under imperfect transmitter CSI, residual cross-tier leakage
enters the macro users' denominators, every SINR passes through the
training-overhead effective-SINR map and tier rates carry the
(T - tau)/T pre-log factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet
from .ofdm import OfdmParams, SubcarrierAllocation, ofdm_equivalent_diagonal
from .precoder import CascadedPrecoder, _fb_channel_product

__all__ = [
    "TierRates",
    "primary_sinr_perfect",
    "primary_sinr_imperfect",
    "secondary_sinr",
    "spectral_efficiency",
    "effective_sinr",
    "tier_se_perfect",
    "tier_se_imperfect",
]


@dataclass
class TierRates:
    """Spectral efficiencies of one network realization, both tiers."""

    primary_se: float
    secondary_se: float
    per_mue: np.ndarray
    per_sue: np.ndarray


def primary_sinr_perfect(
    taps: np.ndarray,
    primary_powers: np.ndarray,
    noise_var: float,
    params: OfdmParams,
) -> np.ndarray:
    """Per-subcarrier SINR of a macro user when no cross-tier leakage exists:
    p_i |g_i|^2 / sigma^2 with g the CP-diagonalized channel gains."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    gains = ofdm_equivalent_diagonal(taps, params)
    return np.asarray(primary_powers) * np.abs(gains) ** 2 / noise_var


def _leakage_power(
    channels: ChannelSet,
    precoders,
    params: OfdmParams,
) -> np.ndarray:
    """(M, N) residual secondary power at each macro user, computed with the
    true interference channels against however the precoders were built."""
    leak = np.zeros((channels.n_mues, params.n_subcarriers))
    for k, prec in enumerate(precoders):
        if not np.any(prec.powers):
            continue
        for j in range(channels.n_mues):
            rows = _fb_channel_product(channels.h_sp[k, j], prec.matrix, params)
            leak[j] += np.abs(rows) ** 2 @ prec.powers
    return leak


def primary_sinr_imperfect(
    channels: ChannelSet,
    precoders,
    primary_powers: np.ndarray,
    noise_var: float,
    params: OfdmParams,
    allocation: SubcarrierAllocation | None = None,
) -> np.ndarray:
    """(M, N) per-subcarrier SINR at every macro user with cross-tier
    leakage in the denominator.

    Row j is masked to user j's subcarriers (zero elsewhere); with
    perfectly built precoders the leakage vanishes and each row reduces to
    primary_sinr_perfect on its block.
    """
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    if allocation is None:
        allocation = SubcarrierAllocation.contiguous(params)
    leak = _leakage_power(channels, precoders, params)
    out = np.zeros((channels.n_mues, params.n_subcarriers))
    powers = np.asarray(primary_powers)
    for j in range(channels.n_mues):
        gains = ofdm_equivalent_diagonal(channels.h_pp[j], params)
        sinr = powers * np.abs(gains) ** 2 / (leak[j] + noise_var)
        idx = allocation.blocks[j]
        out[j, idx] = sinr[idx]
    return out


def secondary_sinr(
    k: int,
    channels: ChannelSet,
    precoders,
    primary_powers: np.ndarray,
    alpha: float,
    noise_var: float,
    params: OfdmParams,
) -> np.ndarray:
    """Per-subcarrier SINR at small user k: direct precoded power over
    co-tier interference, alpha-scaled macro interference and noise."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    if not 0 <= alpha <= 1:
        raise ValueError("interference factor alpha must lie in [0, 1]")
    own = precoders[k]
    rows = _fb_channel_product(channels.h_ss[k, k], own.matrix, params)
    num = np.abs(rows) ** 2 @ own.powers
    den = np.full(params.n_subcarriers, float(noise_var))
    for m, prec in enumerate(precoders):
        if m == k or not np.any(prec.powers):
            continue
        cross = _fb_channel_product(channels.h_ss[m, k], prec.matrix, params)
        den += np.abs(cross) ** 2 @ prec.powers
    mbs_gain = ofdm_equivalent_diagonal(channels.h_ps[k], params)
    den += alpha * np.asarray(primary_powers) * np.abs(mbs_gain) ** 2
    return num / den


def spectral_efficiency(sinr: np.ndarray, params: OfdmParams) -> float:
    """Block-normalized rate (1/(N+L)) sum_i log2(1 + SINR_i)."""
    sinr = np.asarray(sinr)
    if np.any(sinr < 0) or not np.all(np.isfinite(sinr)):
        raise ValueError("SINR values must be finite and non-negative")
    return float(np.sum(np.log1p(sinr)) / np.log(2) / params.block_len)


def effective_sinr(sinr, tau: float):
    """Training-overhead SINR penalty SINR^2 tau / (1 + (1 + tau) SINR),
    applied per received symbol."""
    if tau <= 0:
        raise ValueError("training time must be positive")
    sinr = np.asarray(sinr, dtype=float)
    out = sinr**2 * tau / (1.0 + (1.0 + tau) * sinr)
    return out if out.ndim else float(out)


def tier_se_perfect(
    primary_sinrs: np.ndarray,
    secondary_sinrs: np.ndarray,
    params: OfdmParams,
) -> TierRates:
    """Assemble both tiers' rates from stacked per-user SINR rows."""
    per_mue = np.array([spectral_efficiency(row, params) for row in np.atleast_2d(primary_sinrs)])
    per_sue = np.array([spectral_efficiency(row, params) for row in np.atleast_2d(secondary_sinrs)])
    return TierRates(float(per_mue.sum()), float(per_sue.sum()), per_mue, per_sue)


def tier_se_imperfect(
    primary_sinrs: np.ndarray,
    secondary_sinrs: np.ndarray,
    tau: float,
    coherence_time: float,
    params: OfdmParams,
    penalize_primary: bool = True,
) -> TierRates:
    """Imperfect-CSI rates: effective SINR per symbol, then the
    (T - tau)/T transmission-time pre-log on both tiers.

    ``penalize_primary=False`` exempts the macro tier from the effective-SINR
    map (its pre-log still applies) for studies where only the second tier
    spends training time.
    """
    if not 0 < tau <= coherence_time:
        raise ValueError("training time must satisfy 0 < tau <= coherence_time")
    prelog = (coherence_time - tau) / coherence_time
    prim = np.atleast_2d(primary_sinrs)
    if penalize_primary:
        prim = effective_sinr(prim, tau)
    sec = effective_sinr(np.atleast_2d(secondary_sinrs), tau)
    per_mue = prelog * np.array([spectral_efficiency(row, params) for row in prim])
    per_sue = prelog * np.array([spectral_efficiency(row, params) for row in sec])
    return TierRates(float(per_mue.sum()), float(per_sue.sum()), per_mue, per_sue)
