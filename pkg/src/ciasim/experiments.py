"""Trial orchestration and Monte Carlo experiment drivers.

A trial draws one realization of every link, builds the per-SBS cascaded
precoders from whatever CSI the configuration grants, and evaluates both
tiers' spectral efficiencies against the true channels. Drivers aggregate
seeded trials into reports; every random quantity derives from
(master seed, grid index, trial index) plus a per-link key, so results are
reproducible and independent of execution order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Optional

import numpy as np

from . import metrics
from .channel import (
    ChannelSet,
    CsiQuality,
    draw_channel_set,
    estimate_channel_set,
    noise_variance_for_snr,
)
from .ofdm import OfdmParams, SubcarrierAllocation, ofdm_equivalent_diagonal
from .precoder import (
    CIA_A,
    CIA_B,
    CascadedPrecoder,
    NoNeighborError,
    aggregate_interference_matrix,
    cascade,
    cia_a_outer,
    cia_b_outer,
    equivalent_secondary_channel,
    null_space_precoder,
    optimal_secondary_precoder,
    waterfill,
)

__all__ = [
    "SystemConfig",
    "ThetaMap",
    "TrialReport",
    "UNIFORM_UNIT",
    "WATERFILL",
    "build_inner_precoders",
    "build_precoders",
    "build_tdma_precoders",
    "trial_channels",
    "trial_build_channels",
    "evaluate_rates",
    "evaluate_tdma_rates",
    "run_cia_trial",
    "run_tdma_trial",
    "run_single_tier_reference",
    "optimal_theta_map",
    "se_vs_snr_experiment",
    "eta_vs_tau_experiment",
    "percent_increase_experiment",
    "run_sweep",
    "resolve_theta",
]

UNIFORM_UNIT = "UNIFORM_UNIT"
WATERFILL = "WATERFILL"

SCHEME_SINGLE_TIER = "SINGLE_TIER"
SCHEME_TDMA = "TDMA"


@dataclass(frozen=True)
class SystemConfig:
    """Complete scenario description for a batch of trials."""

    ofdm: OfdmParams
    n_sbs: int
    strategy: str = CIA_A
    theta_override: Optional[int] = None
    alpha: float = 1.0
    snr_db: float = 30.0
    csi: Optional[CsiQuality] = None  # None means perfect CSI
    power_mode: str = UNIFORM_UNIT
    sbs_budget: Optional[float] = None  # None -> cp_len units
    trials: int = 500
    master_seed: int = 1
    snr_calibration: str = "linear"
    primary_effective_sinr: bool = True

    def __post_init__(self):
        if self.n_sbs < 1:
            raise ValueError("n_sbs must be a positive integer")
        if self.strategy not in (CIA_A, CIA_B):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.theta_override is not None and not 1 <= self.theta_override <= self.ofdm.cp_len:
            raise ValueError("theta_override must lie in [1, cp_len]")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.power_mode not in (UNIFORM_UNIT, WATERFILL):
            raise ValueError(f"unknown power_mode {self.power_mode!r}")
        if self.sbs_budget is not None and self.sbs_budget <= 0:
            raise ValueError("sbs_budget must be positive")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if self.snr_calibration not in ("linear", "log"):
            raise ValueError("snr_calibration must be 'linear' or 'log'")

    @property
    def budget(self) -> float:
        return float(self.ofdm.cp_len if self.sbs_budget is None else self.sbs_budget)

    def noise_var(self, snr_db: Optional[float] = None) -> float:
        return noise_variance_for_snr(
            self.snr_db if snr_db is None else snr_db, self.ofdm, self.snr_calibration
        )

    def with_fields(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


@dataclass
class ThetaMap:
    """Offline map from detected neighbor count K to the spectral-efficiency
    maximizing input-subspace dimension."""

    entries: dict
    strategy: str
    snr_db: float
    trials: int

    def theta_for(self, k: int) -> int:
        if k not in self.entries:
            raise KeyError(f"no theta entry for K={k}")
        return self.entries[k]


def resolve_theta(config: SystemConfig, theta=None) -> int:
    """Pick the input-subspace dimension: explicit override wins, then a
    ThetaMap/dict/int argument, then the full kernel width."""
    if config.theta_override is not None:
        return config.theta_override
    if theta is None:
        return config.ofdm.cp_len
    if isinstance(theta, ThetaMap):
        return theta.theta_for(config.n_sbs)
    if isinstance(theta, dict):
        return theta[config.n_sbs]
    return int(theta)


@dataclass
class TrialReport:
    """Per-trial and aggregated spectral efficiencies of one grid point."""

    experiment: str
    scheme: str
    k: int
    theta: Optional[int]
    snr_db: float
    alpha: float
    tau_over_t: float
    master_seed: int
    primary_se: np.ndarray
    secondary_se: np.ndarray
    percent_increase: Optional[np.ndarray] = None

    @property
    def trials(self) -> int:
        return int(np.asarray(self.primary_se).size)

    @staticmethod
    def _stderr(values: np.ndarray) -> float:
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            return 0.0
        return float(values.std(ddof=1) / np.sqrt(values.size))

    @property
    def primary_se_mean(self) -> float:
        return float(np.mean(self.primary_se))

    @property
    def primary_se_stderr(self) -> float:
        return self._stderr(self.primary_se)

    @property
    def secondary_se_mean(self) -> float:
        return float(np.mean(self.secondary_se))

    @property
    def secondary_se_stderr(self) -> float:
        return self._stderr(self.secondary_se)

    @property
    def percent_increase_mean(self) -> Optional[float]:
        if self.percent_increase is None:
            return None
        return float(np.mean(self.percent_increase))


# ---------------------------------------------------------------------------
# Single-trial building blocks
# ---------------------------------------------------------------------------


def trial_channels(config: SystemConfig, grid_index: int, trial_index: int) -> ChannelSet:
    key = (config.master_seed, grid_index, trial_index)
    return draw_channel_set(
        config.ofdm.n_mues, config.n_sbs, config.ofdm.channel_order, key
    )


def _estimation_context(csi: CsiQuality, snr_db: float) -> tuple:
    """Key identifying one estimation round, so different training lengths or
    operating SNRs draw independent training noise on the same realization."""
    return (int(round(csi.tau * 10**6)), int(round(snr_db * 1000)))


def trial_build_channels(
    config: SystemConfig,
    channels: ChannelSet,
    noise_var: float,
    grid_index: int,
    trial_index: int,
    context_key=None,
) -> ChannelSet:
    """Channel knowledge available to the transmitters: the truth under
    perfect CSI, noisy estimates otherwise."""
    if config.csi is None:
        return channels
    if context_key is None:
        context_key = _estimation_context(config.csi, config.snr_db)
    key = (config.master_seed, grid_index, trial_index)
    return estimate_channel_set(channels, config.csi, noise_var, key, context_key)


def build_inner_precoders(build_channels: ChannelSet, params: OfdmParams, allocation=None):
    """Null-space inner precoder of every SBS from its own (possibly
    estimated) interference channels."""
    if allocation is None:
        allocation = SubcarrierAllocation.contiguous(params)
    inners = []
    for k in range(build_channels.n_sbs):
        t_sp = aggregate_interference_matrix(build_channels.sp_row(k), params, allocation)
        inners.append(null_space_precoder(t_sp))
    return inners


def build_precoders(
    config: SystemConfig,
    build_channels: ChannelSet,
    theta: int,
    noise_var: float,
    inners=None,
):
    """Cascaded precoders (and stream powers) for every SBS under the
    configured strategy and power mode."""
    params = config.ofdm
    if inners is None:
        inners = build_inner_precoders(build_channels, params)
    n_sbs = build_channels.n_sbs
    precoders = []
    for k in range(n_sbs):
        direct = equivalent_secondary_channel(build_channels.h_ss[k, k], inners[k], params)
        if config.strategy == CIA_A:
            outer = cia_a_outer(direct, theta)
        else:
            stack = np.vstack(
                [
                    equivalent_secondary_channel(build_channels.h_ss[k, j], inners[k], params)
                    for j in range(n_sbs)
                    if j != k
                ]
            ) if n_sbs > 1 else np.zeros((0, params.cp_len))
            outer = cia_b_outer(stack, theta)
        powers = None
        if config.power_mode == WATERFILL:
            bar = direct @ outer.matrix
            sing = np.linalg.svd(bar, compute_uv=False)
            lam = sing**2 / noise_var
            powers = np.zeros(theta)
            active = lam > 0
            if np.any(active):
                powers[active] = waterfill(lam[active], config.budget)
        precoders.append(cascade(inners[k], outer, powers))
    return precoders


def build_tdma_precoders(
    config: SystemConfig,
    build_channels: ChannelSet,
    noise_var: float,
    inners=None,
):
    """Per-SBS standalone precoders for the TDMA benchmark: full kernel
    width, eigenmode rotation and water-filled powers."""
    params = config.ofdm
    if inners is None:
        inners = build_inner_precoders(build_channels, params)
    precoders = []
    for k in range(build_channels.n_sbs):
        full = _full_equivalent(build_channels.h_ss[k, k], params)
        precoders.append(optimal_secondary_precoder(inners[k], full, noise_var, config.budget))
    return precoders


def _full_equivalent(taps, params: OfdmParams) -> np.ndarray:
    """N x (N+L) equivalent channel F B H without any precoder."""
    return equivalent_secondary_channel(taps, np.eye(params.block_len), params)


def _primary_powers(params: OfdmParams) -> np.ndarray:
    # Uniform unit macro power per subcarrier; the water-filled macro policy
    # exists only in the single-tier reference.
    return np.ones(params.n_subcarriers)


def evaluate_rates(
    config: SystemConfig,
    channels: ChannelSet,
    precoders,
    noise_var: float,
    alpha: Optional[float] = None,
    csi: Optional[CsiQuality] = None,
) -> metrics.TierRates:
    """Both tiers' rates with the given precoders against the true channels.

    ``csi`` defaults to the configuration's; pass a CsiQuality to apply a
    specific training overhead, or rely on config.csi=None for perfect CSI.
    """
    params = config.ofdm
    alpha = config.alpha if alpha is None else alpha
    csi = config.csi if csi is None else csi
    p_p = _primary_powers(params)
    psinr = metrics.primary_sinr_imperfect(channels, precoders, p_p, noise_var, params)
    ssinr = np.vstack(
        [
            metrics.secondary_sinr(k, channels, precoders, p_p, alpha, noise_var, params)
            for k in range(channels.n_sbs)
        ]
    )
    if csi is None:
        return metrics.tier_se_perfect(psinr, ssinr, params)
    return metrics.tier_se_imperfect(
        psinr,
        ssinr,
        csi.tau,
        csi.coherence_time,
        params,
        penalize_primary=config.primary_effective_sinr,
    )


def _silence(precoders):
    return [CascadedPrecoder(p.matrix, np.zeros_like(p.powers)) for p in precoders]


def evaluate_tdma_rates(
    config: SystemConfig,
    channels: ChannelSet,
    tdma_precoders,
    noise_var: float,
    alpha: Optional[float] = None,
    csi: Optional[CsiQuality] = None,
) -> metrics.TierRates:
    """Equal-time-share TDMA rates: one SBS active per slot, tier rates are
    the average over slots."""
    n_sbs = channels.n_sbs
    silent = _silence(tdma_precoders)
    per_mue = None
    per_sue = None
    primary = secondary = 0.0
    for k in range(n_sbs):
        slot = list(silent)
        slot[k] = tdma_precoders[k]
        rates = evaluate_rates(config, channels, slot, noise_var, alpha, csi)
        primary += rates.primary_se / n_sbs
        secondary += rates.secondary_se / n_sbs
        per_mue = rates.per_mue / n_sbs if per_mue is None else per_mue + rates.per_mue / n_sbs
        per_sue = rates.per_sue / n_sbs if per_sue is None else per_sue + rates.per_sue / n_sbs
    return metrics.TierRates(primary, secondary, per_mue, per_sue)


def run_cia_trial(
    config: SystemConfig,
    theta=None,
    grid_index: int = 0,
    trial_index: int = 0,
    noise_var: Optional[float] = None,
) -> metrics.TierRates:
    """One complete CIA trial: draw channels, estimate if configured, build
    the cascaded precoders and score both tiers."""
    theta_val = resolve_theta(config, theta)
    noise_var = config.noise_var() if noise_var is None else noise_var
    channels = trial_channels(config, grid_index, trial_index)
    build = trial_build_channels(config, channels, noise_var, grid_index, trial_index)
    precoders = build_precoders(config, build, theta_val, noise_var)
    return evaluate_rates(config, channels, precoders, noise_var)


def run_tdma_trial(
    config: SystemConfig,
    grid_index: int = 0,
    trial_index: int = 0,
    noise_var: Optional[float] = None,
) -> metrics.TierRates:
    """One TDMA benchmark trial on the same channel draws as the CIA trial
    with the same seeds."""
    noise_var = config.noise_var() if noise_var is None else noise_var
    channels = trial_channels(config, grid_index, trial_index)
    build = trial_build_channels(config, channels, noise_var, grid_index, trial_index)
    precoders = build_tdma_precoders(config, build, noise_var)
    return evaluate_tdma_rates(config, channels, precoders, noise_var)


def run_single_tier_reference(
    config: SystemConfig,
    grid_index: int = 0,
    trial_index: int = 0,
    noise_var: Optional[float] = None,
) -> float:
    """Water-filled standalone macro cell on the same macro channel draws;
    the reference for percent-increase comparisons.

    When the configuration models imperfect CSI, the reference pays the same
    training overhead (pre-log and effective-SINR penalty): water-filling
    needs transmitter CSI, so a standalone deployment trains with the same
    periodicity as the two-tiered one.
    """
    noise_var = config.noise_var() if noise_var is None else noise_var
    channels = trial_channels(config, grid_index, trial_index)
    return _single_tier_rate(config, channels, noise_var, config.csi)


def _single_tier_rate(
    config: SystemConfig,
    channels: ChannelSet,
    noise_var: float,
    csi: Optional[CsiQuality] = None,
) -> float:
    params = config.ofdm
    allocation = SubcarrierAllocation.contiguous(params)
    gains = _composite_macro_gains(channels, params, allocation)
    lam = np.abs(gains) ** 2 / noise_var
    powers = waterfill(lam, float(params.n_subcarriers))
    sinr = powers * lam
    if csi is None:
        return metrics.spectral_efficiency(sinr, params)
    if config.primary_effective_sinr:
        sinr = metrics.effective_sinr(sinr, csi.tau)
    prelog = (csi.coherence_time - csi.tau) / csi.coherence_time
    return prelog * metrics.spectral_efficiency(sinr, params)


def _composite_macro_gains(channels: ChannelSet, params: OfdmParams, allocation) -> np.ndarray:
    """Length-N direct macro gains, each subcarrier taken from the channel of
    the user it is allocated to."""
    gains = np.zeros(params.n_subcarriers, dtype=complex)
    for j in range(channels.n_mues):
        idx = allocation.blocks[j]
        gains[idx] = ofdm_equivalent_diagonal(channels.h_pp[j], params)[idx]
    return gains


# ---------------------------------------------------------------------------
# Monte Carlo drivers
# ---------------------------------------------------------------------------


def _map_trials(fn, trials: int, jobs: int):
    if jobs > 1:
        chunk = max(1, trials // (8 * jobs))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, range(trials), chunksize=chunk))
    return [fn(t) for t in range(trials)]


def _theta_profile_trial(config, k_sbs, grid_index, sigma, trial_index):
    """Second-tier rate profile over every subspace dimension for one draw.

    Exploits that both strategies order their candidate input directions once
    per SBS (strongest eigenmodes / least-leaking columns), so the profile
    over theta follows from cumulative column powers of the rotated
    equivalents.
    """
    params = config.ofdm
    cfg = config.with_fields(n_sbs=k_sbs)
    channels = trial_channels(cfg, grid_index, trial_index)
    allocation = SubcarrierAllocation.contiguous(params)
    inners = build_inner_precoders(channels, params, allocation)
    n, cp = params.n_subcarriers, params.cp_len

    equiv = np.empty((k_sbs, k_sbs, n, cp), dtype=complex)
    for m in range(k_sbs):
        for k in range(k_sbs):
            equiv[m, k] = equivalent_secondary_channel(
                channels.h_ss[m, k], inners[m], params
            )

    rotated = np.empty_like(equiv)
    if config.strategy == CIA_A:
        for m in range(k_sbs):
            _, _, vh = np.linalg.svd(equiv[m, m])
            basis = vh.conj().T
            for k in range(k_sbs):
                rotated[m, k] = equiv[m, k] @ basis
    else:
        if k_sbs < 2:
            raise NoNeighborError("CIA B needs at least one non-served user")
        for m in range(k_sbs):
            others = np.concatenate([equiv[m, k] for k in range(k_sbs) if k != m], axis=0)
            order = np.argsort(np.sum(np.abs(others) ** 2, axis=0), kind="stable")
            for k in range(k_sbs):
                rotated[m, k] = equiv[m, k][:, order]

    cum = np.cumsum(np.abs(rotated) ** 2, axis=3)
    signal = cum[np.arange(k_sbs), np.arange(k_sbs)]  # (K, N, L)
    cot = cum.sum(axis=0) - signal
    mbs = np.stack(
        [
            config.alpha * np.abs(ofdm_equivalent_diagonal(channels.h_ps[k], params)) ** 2
            for k in range(k_sbs)
        ]
    )
    den = cot + (mbs + sigma)[:, :, None]
    rs_profile = np.log1p(signal / den).sum(axis=(0, 1)) / np.log(2) / params.block_len

    gains = _composite_macro_gains(channels, params, allocation)
    rp = metrics.spectral_efficiency(np.abs(gains) ** 2 / sigma, params)
    return rs_profile, rp


def optimal_theta_map(
    config: SystemConfig,
    k_values,
    trials: Optional[int] = None,
    jobs: int = 1,
):
    """Monte Carlo map K -> argmax_theta of the mean second-tier rate, plus
    the per-(K, theta) reports behind it. Ties break to the smallest theta."""
    k_values = list(k_values)
    if not k_values:
        raise ValueError("k_values must be non-empty")
    trials = config.trials if trials is None else trials
    sigma = config.noise_var()
    cp = config.ofdm.cp_len
    entries = {}
    reports = []
    for grid_index, k_sbs in enumerate(k_values):
        fn = partial(_theta_profile_trial, config, k_sbs, grid_index, sigma)
        results = _map_trials(fn, trials, jobs)
        profiles = np.stack([r[0] for r in results])  # (trials, L)
        rp = np.array([r[1] for r in results])
        mean_profile = profiles.mean(axis=0)
        entries[k_sbs] = int(np.argmax(mean_profile)) + 1
        for theta_idx in range(cp):
            reports.append(
                TrialReport(
                    experiment="theta_map",
                    scheme=config.strategy,
                    k=k_sbs,
                    theta=theta_idx + 1,
                    snr_db=config.snr_db,
                    alpha=config.alpha,
                    tau_over_t=0.0,
                    master_seed=config.master_seed,
                    primary_se=rp,
                    secondary_se=profiles[:, theta_idx],
                )
            )
    return ThetaMap(entries, config.strategy, config.snr_db, trials), reports


def _snr_profile_trial(config, k_sbs, grid_index, thetas, sigmas, schemes, trial_index):
    """(scheme, snr) -> rates for one realization, reusing the channel draw
    and inner precoders across the whole SNR grid."""
    cfg = config.with_fields(n_sbs=k_sbs)
    channels = trial_channels(cfg, grid_index, trial_index)
    inners = build_inner_precoders(channels, cfg.ofdm)
    out = {}
    cia_cache = {}
    for scheme in schemes:
        if scheme in (CIA_A, CIA_B):
            scfg = cfg.with_fields(strategy=scheme)
            precs = build_precoders(scfg, channels, thetas[scheme], sigmas[0], inners=inners)
            cia_cache[scheme] = (scfg, precs)
    for si, sigma in enumerate(sigmas):
        for scheme in schemes:
            if scheme in (CIA_A, CIA_B):
                scfg, precs = cia_cache[scheme]
                if scfg.power_mode == WATERFILL:
                    precs = build_precoders(scfg, channels, thetas[scheme], sigma, inners=inners)
                rates = evaluate_rates(scfg, channels, precs, sigma)
            elif scheme == SCHEME_TDMA:
                precs = build_tdma_precoders(cfg, channels, sigma, inners=inners)
                rates = evaluate_tdma_rates(cfg, channels, precs, sigma)
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            out[scheme, si] = (rates.primary_se, rates.secondary_se)
    return out


def se_vs_snr_experiment(
    config: SystemConfig,
    k_values,
    snr_grid_db,
    theta_a=None,
    theta_b=None,
    trials: Optional[int] = None,
    jobs: int = 1,
    schemes=(CIA_A, CIA_B, SCHEME_TDMA),
):
    """Perfect-CSI spectral efficiency of the requested schemes over an SNR
    grid, channel draws shared across the grid for paired comparisons."""
    config = config.with_fields(csi=None)
    trials = config.trials if trials is None else trials
    snrs = list(snr_grid_db)
    sigmas = [config.noise_var(s) for s in snrs]
    reports = []
    for grid_index, k_sbs in enumerate(k_values):
        cfg_k = config.with_fields(n_sbs=k_sbs)
        thetas = {
            CIA_A: resolve_theta(cfg_k.with_fields(strategy=CIA_A), theta_a),
            CIA_B: resolve_theta(cfg_k.with_fields(strategy=CIA_B), theta_b),
        }
        fn = partial(
            _snr_profile_trial, config, k_sbs, grid_index, thetas, sigmas, tuple(schemes)
        )
        results = _map_trials(fn, trials, jobs)
        for scheme in schemes:
            for si, snr in enumerate(snrs):
                rp = np.array([r[scheme, si][0] for r in results])
                rs = np.array([r[scheme, si][1] for r in results])
                reports.append(
                    TrialReport(
                        experiment="se_vs_snr",
                        scheme=scheme,
                        k=k_sbs,
                        theta=thetas.get(scheme),
                        snr_db=snr,
                        alpha=config.alpha,
                        tau_over_t=0.0,
                        master_seed=config.master_seed,
                        primary_se=rp,
                        secondary_se=rs,
                    )
                )
    return reports


def _eta_profile_trial(config, k_sbs, grid_index, theta, fractions, sigma, trial_index):
    """Perfect-CSI rates plus imperfect-CSI rates at each training fraction,
    on one shared channel draw."""
    cfg = config.with_fields(n_sbs=k_sbs)
    base_csi = cfg.csi if cfg.csi is not None else CsiQuality()
    channels = trial_channels(cfg, grid_index, trial_index)

    perfect_cfg = cfg.with_fields(csi=None)
    inners = build_inner_precoders(channels, cfg.ofdm)
    precs = build_precoders(perfect_cfg, channels, theta, sigma, inners=inners)
    perfect = evaluate_rates(perfect_cfg, channels, precs, sigma)

    key = (cfg.master_seed, grid_index, trial_index)
    rows = []
    for frac in fractions:
        csi_f = base_csi.with_tau_fraction(frac)
        context = _estimation_context(csi_f, cfg.snr_db)
        est = estimate_channel_set(channels, csi_f, sigma, key, context)
        est_inners = build_inner_precoders(est, cfg.ofdm)
        est_precs = build_precoders(cfg, est, theta, sigma, inners=est_inners)
        rates = evaluate_rates(cfg, channels, est_precs, sigma, csi=csi_f)
        rows.append((rates.primary_se, rates.secondary_se))
    return (perfect.primary_se, perfect.secondary_se), rows


def eta_vs_tau_experiment(
    config: SystemConfig,
    k_values,
    tau_fractions,
    theta=None,
    trials: Optional[int] = None,
    jobs: int = 1,
):
    """Imperfect-CSI rates across training fractions plus the perfect-CSI
    baseline rows (tau_over_t = 0) needed to form the retention ratios."""
    trials = config.trials if trials is None else trials
    fractions = list(tau_fractions)
    sigma = config.noise_var()
    reports = []
    for grid_index, k_sbs in enumerate(k_values):
        cfg_k = config.with_fields(n_sbs=k_sbs)
        theta_val = resolve_theta(cfg_k, theta)
        fn = partial(
            _eta_profile_trial, config, k_sbs, grid_index, theta_val, tuple(fractions), sigma
        )
        results = _map_trials(fn, trials, jobs)
        perfect_rp = np.array([r[0][0] for r in results])
        perfect_rs = np.array([r[0][1] for r in results])
        common = dict(
            experiment="eta_vs_tau",
            scheme=config.strategy,
            k=k_sbs,
            theta=theta_val,
            snr_db=config.snr_db,
            alpha=config.alpha,
            master_seed=config.master_seed,
        )
        reports.append(
            TrialReport(tau_over_t=0.0, primary_se=perfect_rp, secondary_se=perfect_rs, **common)
        )
        for fi, frac in enumerate(fractions):
            rp = np.array([r[1][fi][0] for r in results])
            rs = np.array([r[1][fi][1] for r in results])
            reports.append(
                TrialReport(tau_over_t=frac, primary_se=rp, secondary_se=rs, **common)
            )
    return reports


def _pct_profile_trial(
    config, k_sbs, grid_index, theta, fraction, alphas, snrs, sigmas, schemes, trial_index
):
    """Imperfect-CSI two-tier rates and the per-seed single-tier reference,
    for every (snr, alpha) pair on one channel draw."""
    cfg = config.with_fields(n_sbs=k_sbs)
    base_csi = cfg.csi if cfg.csi is not None else CsiQuality()
    csi_f = base_csi.with_tau_fraction(fraction)
    channels = trial_channels(cfg, grid_index, trial_index)
    key = (cfg.master_seed, grid_index, trial_index)
    out = {}
    for si, sigma in enumerate(sigmas):
        ref = _single_tier_rate(cfg, channels, sigma, csi_f)
        est = estimate_channel_set(
            channels, csi_f, sigma, key, _estimation_context(csi_f, snrs[si])
        )
        est_inners = build_inner_precoders(est, cfg.ofdm)
        cia_precs = build_precoders(cfg, est, theta, sigma, inners=est_inners)
        tdma_precs = (
            build_tdma_precoders(cfg, est, sigma, inners=est_inners)
            if SCHEME_TDMA in schemes
            else None
        )
        for alpha in alphas:
            rates = evaluate_rates(cfg, channels, cia_precs, sigma, alpha=alpha, csi=csi_f)
            out[cfg.strategy, si, alpha] = (rates.primary_se, rates.secondary_se, ref)
            if tdma_precs is not None:
                trates = evaluate_tdma_rates(
                    cfg, channels, tdma_precs, sigma, alpha=alpha, csi=csi_f
                )
                out[SCHEME_TDMA, si, alpha] = (trates.primary_se, trates.secondary_se, ref)
    return out


def percent_increase_experiment(
    config: SystemConfig,
    k_values,
    alphas,
    snr_grid_db,
    tau_fraction: float,
    theta=None,
    trials: Optional[int] = None,
    jobs: int = 1,
    schemes=None,
):
    """Two-tier spectral efficiency gain over the water-filled single-tier
    reference, per (K, alpha, SNR), under the configured training overhead."""
    trials = config.trials if trials is None else trials
    snrs = list(snr_grid_db)
    alphas = [float(a) for a in alphas]
    sigmas = [config.noise_var(s) for s in snrs]
    if schemes is None:
        schemes = (config.strategy, SCHEME_TDMA)
    reports = []
    for grid_index, k_sbs in enumerate(k_values):
        cfg_k = config.with_fields(n_sbs=k_sbs)
        theta_val = resolve_theta(cfg_k, theta)
        fn = partial(
            _pct_profile_trial,
            config,
            k_sbs,
            grid_index,
            theta_val,
            tau_fraction,
            tuple(alphas),
            tuple(snrs),
            sigmas,
            tuple(schemes),
        )
        results = _map_trials(fn, trials, jobs)
        for scheme in schemes:
            if scheme == SCHEME_SINGLE_TIER:
                continue
            for si, snr in enumerate(snrs):
                for alpha in alphas:
                    rp = np.array([r[scheme, si, alpha][0] for r in results])
                    rs = np.array([r[scheme, si, alpha][1] for r in results])
                    ref = np.array([r[scheme, si, alpha][2] for r in results])
                    pct = 100.0 * ((rp + rs) / ref - 1.0)
                    reports.append(
                        TrialReport(
                            experiment="percent_increase",
                            scheme=scheme,
                            k=k_sbs,
                            theta=theta_val if scheme != SCHEME_TDMA else None,
                            snr_db=snr,
                            alpha=alpha,
                            tau_over_t=tau_fraction,
                            master_seed=config.master_seed,
                            primary_se=rp,
                            secondary_se=rs,
                            percent_increase=pct,
                        )
                    )
    return reports


def _sweep_trial(config, grid_index, schemes, theta_val, trial_index):
    noise_var = config.noise_var()
    channels = trial_channels(config, grid_index, trial_index)
    build = trial_build_channels(config, channels, noise_var, grid_index, trial_index)
    inners = None
    out = {}
    ref = _single_tier_rate(config, channels, noise_var, config.csi)
    for scheme in schemes:
        if scheme == SCHEME_SINGLE_TIER:
            out[scheme] = (ref, 0.0, ref)
            continue
        if inners is None:
            inners = build_inner_precoders(build, config.ofdm)
        if scheme == SCHEME_TDMA:
            precs = build_tdma_precoders(config, build, noise_var, inners=inners)
            rates = evaluate_tdma_rates(config, channels, precs, noise_var)
        elif scheme in (CIA_A, CIA_B):
            scfg = config.with_fields(strategy=scheme)
            precs = build_precoders(scfg, build, theta_val[scheme], noise_var, inners=inners)
            rates = evaluate_rates(scfg, channels, precs, noise_var)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        out[scheme] = (rates.primary_se, rates.secondary_se, ref)
    return out


def run_sweep(
    configs,
    schemes=(CIA_A, CIA_B, SCHEME_TDMA, SCHEME_SINGLE_TIER),
    theta=None,
    jobs: int = 1,
    experiment: str = "custom",
):
    """Run every configuration in the grid; a failing grid point is recorded
    as a diagnostic and does not abort the remaining points.

    Returns (reports, failures) where failures is a list of dicts with the
    grid index and the error representation.
    """
    reports = []
    failures = []
    for grid_index, config in enumerate(configs):
        try:
            theta_val = {
                scheme: resolve_theta(
                    config.with_fields(strategy=scheme) if scheme in (CIA_A, CIA_B) else config,
                    theta,
                )
                for scheme in (CIA_A, CIA_B)
            }
            fn = partial(_sweep_trial, config, grid_index, tuple(schemes), theta_val)
            results = _map_trials(fn, config.trials, jobs)
            for scheme in schemes:
                rp = np.array([r[scheme][0] for r in results])
                rs = np.array([r[scheme][1] for r in results])
                refs = np.array([r[scheme][2] for r in results])
                pct = 100.0 * ((rp + rs) / refs - 1.0)
                reports.append(
                    TrialReport(
                        experiment=experiment,
                        scheme=scheme,
                        k=config.n_sbs,
                        theta=theta_val.get(scheme) if scheme in (CIA_A, CIA_B) else None,
                        snr_db=config.snr_db,
                        alpha=config.alpha,
                        tau_over_t=0.0 if config.csi is None else config.csi.tau_fraction,
                        master_seed=config.master_seed,
                        primary_se=rp,
                        secondary_se=rs,
                        percent_increase=pct,
                    )
                )
        except Exception as exc:  # pragma: no cover - exercised via CLI tests
            failures.append({"grid_index": grid_index, "error": repr(exc)})
    return reports, failures
