"""OFDM block-transmission matrices and equivalent-channel helpers.

All indices are 0-based internally (formulas quoted in docs are 1-based).
A transmit block is ``n_subcarriers + cp_len`` samples long, the cyclic
prefix being the last ``cp_len`` time-domain samples repeated up front.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "OfdmParams",
    "SubcarrierAllocation",
    "dft_matrix",
    "cp_insertion_matrix",
    "cp_removal_matrix",
    "circulant_channel_matrix",
    "subcarrier_filters",
    "ofdm_equivalent_diagonal",
]


@dataclass(frozen=True)
class OfdmParams:
    """Static dimensioning of the OFDMA downlink.

    Attributes
    ----------
    n_subcarriers : int
        Number of active subcarriers N (also the DFT size).
    cp_len : int
        Cyclic prefix length L.
    channel_order : int
        Highest tap delay l; every link carries l + 1 taps.
    n_mues : int
        Number of served macro users; N must split evenly across them.
    """

    n_subcarriers: int
    cp_len: int
    channel_order: int
    n_mues: int

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be a positive integer")
        if self.cp_len < 1:
            raise ValueError("cp_len must be a positive integer")
        if self.channel_order < 0:
            raise ValueError("channel_order must be non-negative")
        if self.n_mues < 1:
            raise ValueError("n_mues must be a positive integer")
        # cp_len == channel_order still yields a clean cyclic convolution,
        # so equality is allowed even though strict inequality is typical.
        if self.cp_len < self.channel_order:
            raise ValueError(
                "cp_len must be >= channel_order so the prefix absorbs the "
                "full channel memory"
            )
        if self.n_subcarriers <= self.cp_len:
            raise ValueError("n_subcarriers must exceed cp_len")
        if self.n_subcarriers % self.n_mues != 0:
            raise ValueError(
                "n_subcarriers must be divisible by n_mues for a uniform "
                "subcarrier split"
            )

    @property
    def block_len(self) -> int:
        """Transmit block length N + L."""
        return self.n_subcarriers + self.cp_len

    @property
    def n_taps(self) -> int:
        return self.channel_order + 1

    @property
    def prb_size(self) -> int:
        """Subcarriers per macro user, N / M."""
        return self.n_subcarriers // self.n_mues


@dataclass(frozen=True)
class SubcarrierAllocation:
    """Disjoint per-user subcarrier index sets covering 0..N-1."""

    blocks: tuple

    def __post_init__(self):
        sizes = {b.size for b in self.blocks}
        if len(sizes) != 1:
            raise ValueError("all users must receive the same number of subcarriers")
        flat = np.concatenate(self.blocks)
        n = flat.size
        if not np.array_equal(np.sort(flat), np.arange(n)):
            raise ValueError("blocks must be disjoint and cover every subcarrier")

    @classmethod
    def contiguous(cls, params: OfdmParams) -> "SubcarrierAllocation":
        """Default allocation: user j gets the j-th contiguous block of N/M."""
        size = params.prb_size
        blocks = tuple(
            np.arange(j * size, (j + 1) * size) for j in range(params.n_mues)
        )
        return cls(blocks)

    @property
    def n_users(self) -> int:
        return len(self.blocks)

    def mask(self, j: int, n: int) -> np.ndarray:
        """0/1 vector of length ``n`` selecting user ``j``'s subcarriers."""
        out = np.zeros(n)
        out[self.blocks[j]] = 1.0
        return out


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries exp(-2j*pi*k*l/n) / sqrt(n)."""
    if n < 1:
        raise ValueError("DFT size must be a positive integer")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def cp_insertion_matrix(params: OfdmParams) -> np.ndarray:
    """(N+L) x N matrix prepending the last L entries of its input."""
    n, cp = params.n_subcarriers, params.cp_len
    top = np.hstack([np.zeros((cp, n - cp)), np.eye(cp)])
    return np.vstack([top, np.eye(n)])


def cp_removal_matrix(params: OfdmParams) -> np.ndarray:
    """N x (N+L) matrix keeping the last N entries of its input."""
    n, cp = params.n_subcarriers, params.cp_len
    return np.hstack([np.zeros((n, cp)), np.eye(n)])


def circulant_channel_matrix(taps: np.ndarray, dim: int) -> np.ndarray:
    """dim x dim circulant matrix of the tap vector.

    Entry (r, c) equals taps[(r - c) mod dim] when that delay exists and 0
    otherwise, i.e. the matrix of a cyclic convolution with the channel.
    """
    taps = np.asarray(taps, dtype=complex).ravel()
    if dim < taps.size:
        raise ValueError(f"matrix dimension {dim} is smaller than the {taps.size} taps")
    if not np.all(np.isfinite(taps)):
        raise ValueError("channel taps must be finite")
    padded = np.zeros(dim, dtype=complex)
    padded[: taps.size] = taps
    delay = (np.arange(dim)[:, None] - np.arange(dim)[None, :]) % dim
    return padded[delay]


def subcarrier_filters(params: OfdmParams, allocation: SubcarrierAllocation | None = None):
    """Per-user diagonal 0/1 extraction matrices D_j.

    The filters are idempotent, mutually orthogonal and sum to the identity.
    """
    if allocation is None:
        allocation = SubcarrierAllocation.contiguous(params)
    n = params.n_subcarriers
    return [np.diag(allocation.mask(j, n)) for j in range(allocation.n_users)]


def ofdm_equivalent_diagonal(taps: np.ndarray, params: OfdmParams) -> np.ndarray:
    """Per-subcarrier complex gains of the CP-diagonalized channel.

    Equals the diagonal of F B H A F^-1, which for cp_len >= channel_order
    is the length-N DFT of the zero-padded tap vector.
    """
    taps = np.asarray(taps, dtype=complex).ravel()
    if taps.size - 1 > params.cp_len:
        raise ValueError("channel memory exceeds the cyclic prefix")
    return np.fft.fft(taps, n=params.n_subcarriers)
