"""Random channel realizations and the noisy-training estimation model.

Seeding is hierarchical and key-based: every tap vector is drawn from a
generator derived from (trial key, link kind, transmitter, receiver), so
adding users or reordering loops never perturbs existing draws, and trials
can run in parallel with deterministic merged results.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import precoder
from .ofdm import OfdmParams

__all__ = [
    "ChannelSet",
    "CsiQuality",
    "EstimatedTaps",
    "draw_taps",
    "draw_channel_set",
    "noisy_estimate",
    "estimate_channel_set",
    "noise_variance_for_snr",
    "reference_received_power",
    "link_rng",
]

# Namespace codes keeping channel draws and estimation noise on disjoint streams.
_NS_CHANNEL = 1
_NS_ESTIMATE = 2

LINK_PP = 0  # macro base -> macro user
LINK_SP = 1  # small base -> macro user
LINK_PS = 2  # macro base -> small user
LINK_SS = 3  # small base -> small user


def _nonneg(value: int) -> int:
    # SeedSequence entropy words must be non-negative; fold sign losslessly.
    value = int(value)
    return 2 * value if value >= 0 else -2 * value - 1


def link_rng(trial_key, *subkey: int) -> np.random.Generator:
    """Deterministic generator for one (trial, link) coordinate."""
    if isinstance(trial_key, int):
        trial_key = (trial_key,)
    words = [_nonneg(v) for v in (*trial_key, *subkey)]
    return np.random.default_rng(np.random.SeedSequence(words))


def draw_taps(order: int, rng: np.random.Generator) -> np.ndarray:
    """Rayleigh-fading tap vector, order + 1 i.i.d. complex normal taps with
    per-tap variance 1/(order+1) so the expected channel energy is 1."""
    if order < 0:
        raise ValueError("channel order must be non-negative")
    n = order + 1
    scale = np.sqrt(0.5 / n)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


@dataclass
class ChannelSet:
    """Every tap vector of one network realization.

    Keys are 0-based: ``h_pp[j]`` macro base to macro user j, ``h_sp[k, j]``
    small base k to macro user j, ``h_ps[k]`` macro base to small user k and
    ``h_ss[k, m]`` small base k to small user m.
    """

    n_mues: int
    n_sbs: int
    channel_order: int
    h_pp: dict
    h_sp: dict
    h_ps: dict
    h_ss: dict

    def __post_init__(self):
        expected = {
            "h_pp": {j for j in range(self.n_mues)},
            "h_sp": {(k, j) for k in range(self.n_sbs) for j in range(self.n_mues)},
            "h_ps": {k for k in range(self.n_sbs)},
            "h_ss": {(k, m) for k in range(self.n_sbs) for m in range(self.n_sbs)},
        }
        for name, keys in expected.items():
            got = set(getattr(self, name))
            if got != keys:
                raise ValueError(f"{name} does not cover the configured users")

    def sp_row(self, k: int):
        """Interference taps of small base k towards every macro user."""
        return [self.h_sp[k, j] for j in range(self.n_mues)]


def draw_channel_set(n_mues: int, n_sbs: int, channel_order: int, trial_key) -> ChannelSet:
    """Draw all M + K*M + K + K^2 independent tap vectors for one trial."""

    def taps(kind, tx, rx):
        return draw_taps(channel_order, link_rng(trial_key, _NS_CHANNEL, kind, tx, rx))

    h_pp = {j: taps(LINK_PP, 0, j) for j in range(n_mues)}
    h_sp = {
        (k, j): taps(LINK_SP, k, j) for k in range(n_sbs) for j in range(n_mues)
    }
    h_ps = {k: taps(LINK_PS, 0, k) for k in range(n_sbs)}
    h_ss = {
        (k, m): taps(LINK_SS, k, m) for k in range(n_sbs) for m in range(n_sbs)
    }
    return ChannelSet(n_mues, n_sbs, channel_order, h_pp, h_sp, h_ps, h_ss)


@dataclass(frozen=True)
class CsiQuality:
    """Training-phase parameters: transmit power rho, training length tau and
    coherence time (both in symbols)."""

    rho: float = 1.0
    tau: float = 120.0
    coherence_time: float = 1000.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("training power must be positive")
        if not 0 < self.tau <= self.coherence_time:
            raise ValueError("training time must satisfy 0 < tau <= coherence_time")

    @property
    def tau_fraction(self) -> float:
        return self.tau / self.coherence_time

    def with_tau_fraction(self, fraction: float) -> "CsiQuality":
        return CsiQuality(self.rho, fraction * self.coherence_time, self.coherence_time)


@dataclass(frozen=True)
class EstimatedTaps:
    """MMSE split of a tap vector into estimate and independent error; the
    two parts add back to the true channel exactly."""

    estimate: np.ndarray
    error: np.ndarray

    @property
    def true_taps(self) -> np.ndarray:
        return self.estimate + self.error


def noisy_estimate(
    true_taps: np.ndarray,
    csi: CsiQuality,
    noise_var: float,
    rng: np.random.Generator,
) -> EstimatedTaps:
    """Per-tap linear MMSE estimate from the training observation
    r = sqrt(rho*tau) h + n, with prior tap variance 1/(l+1)."""
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    taps = np.asarray(true_taps, dtype=complex).ravel()
    n = taps.size
    rho_tau = csi.rho * csi.tau
    noise = np.sqrt(noise_var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    obs = np.sqrt(rho_tau) * taps + noise
    prior = 1.0 / n
    gain = np.sqrt(rho_tau) * prior / (rho_tau * prior + noise_var)
    estimate = gain * obs
    return EstimatedTaps(estimate, taps - estimate)


def estimate_channel_set(
    channels: ChannelSet,
    csi: CsiQuality,
    noise_var: float,
    trial_key,
    context_key=(),
) -> ChannelSet:
    """Replace every transmitter-side channel (h_sp, h_ss) by its noisy
    estimate.

    Receiver-side links (h_pp, h_ps) are left untouched: no transmitter uses
    them, and receivers are assumed to track their own channel. ``context_key``
    distinguishes independent estimation rounds (e.g. different training
    lengths) on the same realization.
    """

    def est(kind, tx, rx, taps):
        rng = link_rng(trial_key, _NS_ESTIMATE, kind, tx, rx, *context_key)
        return noisy_estimate(taps, csi, noise_var, rng).estimate

    h_sp = {key: est(LINK_SP, *key, taps) for key, taps in channels.h_sp.items()}
    h_ss = {key: est(LINK_SS, *key, taps) for key, taps in channels.h_ss.items()}
    return ChannelSet(
        channels.n_mues,
        channels.n_sbs,
        channels.channel_order,
        dict(channels.h_pp),
        h_sp,
        dict(channels.h_ps),
        h_ss,
    )


# Fixed entropy prefix for the calibration stream, disjoint from experiment seeds.
_CALIB_KEY = 0x5EED
_CALIB_TRIALS = 1000


@lru_cache(maxsize=None)
def reference_received_power(
    params: OfdmParams, mode: str = "linear", trials: int = _CALIB_TRIALS
) -> float:
    """Monte Carlo average received power of a unit-power kernel-confined
    direct link, the reference that anchors the SNR definition.

    ``mode='linear'`` returns E[|t_i|^2] over the rows of the equivalent
    direct channel; ``mode='log'`` returns E[log10 |t_i|^2], matching an SNR
    defined through the expected log-ratio instead.
    """
    if mode not in ("linear", "log"):
        raise ValueError("mode must be 'linear' or 'log'")
    total = 0.0
    for t in range(trials):
        key = (_CALIB_KEY, t)
        sp_row = [
            draw_taps(params.channel_order, link_rng(key, _NS_CHANNEL, LINK_SP, 0, j))
            for j in range(params.n_mues)
        ]
        direct = draw_taps(params.channel_order, link_rng(key, _NS_CHANNEL, LINK_SS, 0, 0))
        t_sp = precoder.aggregate_interference_matrix(sp_row, params)
        inner = precoder.null_space_precoder(t_sp)
        t_ss = precoder.equivalent_secondary_channel(direct, inner, params)
        row_power = np.sum(np.abs(t_ss) ** 2, axis=1)
        if mode == "linear":
            total += float(np.mean(row_power))
        else:
            total += float(np.mean(np.log10(row_power)))
    return total / trials


def noise_variance_for_snr(
    snr_db: float,
    params: OfdmParams,
    mode: str = "linear",
    trials: int = _CALIB_TRIALS,
) -> float:
    """Thermal noise power realizing the requested second-tier SNR under the
    calibrated unit-power reference."""
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    ref = reference_received_power(params, mode, trials)
    if mode == "linear":
        return ref / 10.0 ** (snr_db / 10.0)
    return 10.0 ** (ref - snr_db / 10.0)
