"""Cascaded secondary-tier precoding.

An inner precoder confines each small-cell transmission to the null space of
its aggregated interference channel towards the macro users; an outer
precoder then selects a theta-dimensional input subspace, either along the
strongest direct-link eigenmodes (CIA A) or along the kernel columns leaking
least power to non-served users (CIA B). Water-filling provides the optimal
power loading over the resulting eigenmodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ofdm import OfdmParams, SubcarrierAllocation, circulant_channel_matrix

__all__ = [
    "DegenerateChannelError",
    "NoNeighborError",
    "InnerPrecoder",
    "OuterPrecoder",
    "CascadedPrecoder",
    "aggregate_interference_matrix",
    "null_space_precoder",
    "equivalent_secondary_channel",
    "cia_a_outer",
    "cia_b_outer",
    "cascade",
    "waterfill",
    "optimal_secondary_precoder",
    "verify_semi_unitary",
    "logdet_spectral_efficiency",
]

CIA_A = "CIA_A"
CIA_B = "CIA_B"

# Relative singular-value threshold below which a direction counts as null.
KERNEL_RTOL = 1e-8


class DegenerateChannelError(RuntimeError):
    """The aggregated interference channel lost rank; its null space is
    wider than the cyclic-prefix redundancy and the draw should be reported
    rather than silently precoded."""


class NoNeighborError(ValueError):
    """CIA B needs at least one non-served user to measure leakage against."""


@dataclass(frozen=True)
class InnerPrecoder:
    """Orthonormal basis of the interference-channel null space, (N+L) x L."""

    matrix: np.ndarray


@dataclass(frozen=True)
class OuterPrecoder:
    """Input-subspace selector, L x theta, with orthonormal columns."""

    matrix: np.ndarray
    strategy: str
    theta: int


@dataclass
class CascadedPrecoder:
    """Full transmit precoder Z = E @ Theta plus per-stream powers."""

    matrix: np.ndarray
    powers: np.ndarray

    @property
    def theta(self) -> int:
        return self.matrix.shape[1]


def _fb_channel_product(taps: np.ndarray, x: np.ndarray, params: OfdmParams) -> np.ndarray:
    """F B H x for a (N+L)-row matrix x, H circulant of the taps.

    Uses the cyclic-convolution form of H; equivalent to the dense product
    dft_matrix(N) @ B @ circulant_channel_matrix(taps, N+L) @ x.
    """
    block = params.block_len
    x = np.asarray(x, dtype=complex)
    h_hat = np.fft.fft(np.asarray(taps, dtype=complex).ravel(), block)
    hx = np.fft.ifft(h_hat[:, None] * np.fft.fft(x, axis=0), axis=0)
    tail = hx[params.cp_len:]
    return np.fft.fft(tail, axis=0) / np.sqrt(params.n_subcarriers)


def aggregate_interference_matrix(
    h_sp_row,
    params: OfdmParams,
    allocation: SubcarrierAllocation | None = None,
) -> np.ndarray:
    """Overall N x (N+L) interference channel from one SBS to all macro users.

    Row block j (the subcarriers of user j) is taken from the equivalent
    channel F B H of the link towards that user; summing the per-user
    filtered contributions is equivalent to this row assembly.
    """
    if allocation is None:
        allocation = SubcarrierAllocation.contiguous(params)
    if len(h_sp_row) != params.n_mues:
        raise ValueError("need one interference channel per macro user")
    out = np.zeros((params.n_subcarriers, params.block_len), dtype=complex)
    for j, taps in enumerate(h_sp_row):
        h = circulant_channel_matrix(taps, params.block_len)
        rows = np.fft.fft(h[params.cp_len:], axis=0) / np.sqrt(params.n_subcarriers)
        idx = allocation.blocks[j]
        out[idx] = rows[idx]
    return out


def null_space_precoder(t_matrix: np.ndarray, rtol: float = KERNEL_RTOL) -> InnerPrecoder:
    """Orthonormal kernel basis of a full-row-rank wide matrix.

    The basis comes from the right singular vectors attached to the
    n_cols - n_rows smallest singular values; a numerical rank below the row
    count raises DegenerateChannelError.
    """
    t_matrix = np.asarray(t_matrix)
    n_rows, n_cols = t_matrix.shape
    if n_cols <= n_rows:
        raise ValueError("interference matrix must be wide to have a kernel")
    _, sing, vh = np.linalg.svd(t_matrix)
    rank = int(np.count_nonzero(sing > rtol * sing[0]))
    if rank < n_rows:
        raise DegenerateChannelError(
            f"numerical rank {rank} below expected {n_rows}; null space is degenerate"
        )
    return InnerPrecoder(vh[n_rows:].conj().T)


def equivalent_secondary_channel(taps, inner, params: OfdmParams) -> np.ndarray:
    """N x L equivalent direct-link channel F B H E seen through the inner precoder."""
    mat = inner.matrix if isinstance(inner, InnerPrecoder) else np.asarray(inner)
    return _fb_channel_product(taps, mat, params)


def cia_a_outer(t_direct: np.ndarray, theta: int) -> OuterPrecoder:
    """Outer precoder aligned with the theta strongest direct-link eigenmodes."""
    t_direct = np.asarray(t_direct)
    n_cols = t_direct.shape[1]
    if not 1 <= theta <= n_cols:
        raise ValueError(f"theta must lie in [1, {n_cols}], got {theta}")
    _, _, vh = np.linalg.svd(t_direct)
    return OuterPrecoder(vh[:theta].conj().T, CIA_A, theta)


def cia_b_outer(t_others: np.ndarray, theta: int) -> OuterPrecoder:
    """Outer precoder keeping the theta kernel columns of least leaked power.

    ``t_others`` stacks the equivalent channels towards the non-served users,
    shape N*(K-1) x L. Ties in column power break towards the lowest index.
    """
    t_others = np.asarray(t_others)
    if t_others.shape[0] == 0:
        raise NoNeighborError("no non-served users: leakage selection is undefined")
    n_cols = t_others.shape[1]
    if not 1 <= theta <= n_cols:
        raise ValueError(f"theta must lie in [1, {n_cols}], got {theta}")
    col_power = np.sum(np.abs(t_others) ** 2, axis=0)
    order = np.argsort(col_power, kind="stable")
    selected = order[:theta]
    mat = np.zeros((n_cols, theta))
    mat[selected, np.arange(theta)] = 1.0
    return OuterPrecoder(mat, CIA_B, theta)


def cascade(inner: InnerPrecoder, outer: OuterPrecoder, powers=None) -> CascadedPrecoder:
    """Compose inner and outer precoders into Z = E @ Theta.

    Both factors are semi-unitary so Z must be as well; a Gram matrix away
    from the identity indicates numerical degeneracy upstream.
    """
    if inner.matrix.shape[1] != outer.matrix.shape[0]:
        raise ValueError("inner/outer precoder dimensions do not match")
    z = inner.matrix @ outer.matrix
    gram = z.conj().T @ z
    if np.linalg.norm(gram - np.eye(z.shape[1])) > 1e-10:
        raise DegenerateChannelError("cascaded precoder lost semi-unitarity")
    if powers is None:
        powers = np.ones(z.shape[1])
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (z.shape[1],):
        raise ValueError("one power per precoded stream required")
    return CascadedPrecoder(z, powers)


def waterfill(eigenvalues, budget: float) -> np.ndarray:
    """Water-filling powers p_i = max(mu - 1/lambda_i, 0) with sum(p) = budget.

    The water level is solved exactly over the sorted support candidates, so
    no iteration tolerance enters the result.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    if lam.size == 0:
        raise ValueError("need at least one eigenvalue")
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be positive and finite")
    if budget <= 0:
        raise ValueError("power budget must be positive")
    inv = 1.0 / lam
    inv_sorted = np.sort(inv)
    level = 0.0
    for m in range(lam.size, 0, -1):
        level = (budget + inv_sorted[:m].sum()) / m
        if level > inv_sorted[m - 1]:
            break
    return np.maximum(level - inv, 0.0)


def _whiten(interference_cov, mat: np.ndarray) -> np.ndarray:
    """Apply S^(-1/2) to ``mat``; a scalar covariance means sigma^2 * I."""
    if np.isscalar(interference_cov):
        if interference_cov <= 0:
            raise ValueError("interference covariance must be positive definite")
        return mat / np.sqrt(interference_cov)
    cov = np.asarray(interference_cov)
    eigval, eigvec = np.linalg.eigh(cov)
    if eigval[0] <= 0:
        raise ValueError("interference covariance must be positive definite")
    return (eigvec * eigval**-0.5) @ (eigvec.conj().T @ mat)


def optimal_secondary_precoder(
    inner: InnerPrecoder,
    t_direct_full: np.ndarray,
    interference_cov,
    budget: float,
) -> CascadedPrecoder:
    """Spectral-efficiency-optimal kernel-confined precoder with water-filling.

    Whitens the direct link by the interference-plus-noise covariance (a
    scalar stands for sigma^2 * I), rotates the kernel basis onto the
    whitened eigenmodes and water-fills the budget over them.
    """
    g = _whiten(interference_cov, np.asarray(t_direct_full) @ inner.matrix)
    _, sing, vh = np.linalg.svd(g)
    lam = sing**2
    powers = np.zeros(lam.size)
    active = lam > 0
    if np.any(active):
        powers[active] = waterfill(lam[active], budget)
    return CascadedPrecoder(inner.matrix @ vh.conj().T, powers)


def verify_semi_unitary(matrix: np.ndarray, tol: float = 1e-10) -> bool:
    """True when the smaller Gram matrix is within ``tol`` of the identity
    (Frobenius norm)."""
    matrix = np.asarray(matrix)
    rows, cols = matrix.shape
    if rows >= cols:
        gram = matrix.conj().T @ matrix
    else:
        gram = matrix @ matrix.conj().T
    return bool(np.linalg.norm(gram - np.eye(gram.shape[0])) <= tol)


def logdet_spectral_efficiency(
    t_direct_full: np.ndarray,
    precoder: CascadedPrecoder,
    interference_cov,
    block_len: int,
) -> float:
    """Gaussian-input spectral efficiency of a precoded link, log-det form,
    normalized by the transmit block length."""
    tz = _whiten(interference_cov, np.asarray(t_direct_full) @ precoder.matrix)
    gram = (tz * precoder.powers) @ tz.conj().T
    _, logdet = np.linalg.slogdet(np.eye(gram.shape[0]) + gram)
    return float(logdet / np.log(2) / block_len)
