"""Link-level simulator for a two-tiered OFDMA network whose second tier
transmits through cascaded null-space precoders (cognitive interference
alignment)."""

from .channel import ChannelSet, CsiQuality, EstimatedTaps, noise_variance_for_snr
from .experiments import (
    SystemConfig,
    ThetaMap,
    TrialReport,
    optimal_theta_map,
    run_cia_trial,
    run_single_tier_reference,
    run_sweep,
    run_tdma_trial,
)
from .metrics import TierRates
from .ofdm import OfdmParams, SubcarrierAllocation
from .precoder import (
    CascadedPrecoder,
    DegenerateChannelError,
    InnerPrecoder,
    NoNeighborError,
    OuterPrecoder,
    verify_semi_unitary,
    waterfill,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ChannelSet",
    "CsiQuality",
    "EstimatedTaps",
    "noise_variance_for_snr",
    "SystemConfig",
    "ThetaMap",
    "TrialReport",
    "optimal_theta_map",
    "run_cia_trial",
    "run_single_tier_reference",
    "run_sweep",
    "run_tdma_trial",
    "TierRates",
    "OfdmParams",
    "SubcarrierAllocation",
    "CascadedPrecoder",
    "DegenerateChannelError",
    "InnerPrecoder",
    "NoNeighborError",
    "OuterPrecoder",
    "verify_semi_unitary",
    "waterfill",
]
