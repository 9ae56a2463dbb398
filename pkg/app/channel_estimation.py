"""Uplink pilot accounting and DFT-pattern least-squares channel estimation."""
import logging
from typing import FrozenSet, Tuple, Union

import numpy as np
from scipy import linalg

from app.channel_model import circular_gaussian
from app.models import ChannelSet, EstimatedCsi, PhaseConfig
from app.schemas import PilotBudget, PilotMode

logger = logging.getLogger(__name__)

Groups = Tuple[FrozenSet[int], FrozenSet[int]]


class EstimationError(RuntimeError):
    """Raised when the pilot pattern matrix cannot be inverted."""


def pilot_budget(N: int, K: int, mode: Union[PilotMode, str]) -> PilotBudget:
    """
    Pilot symbols needed in one coherence block.

    Args:
        N (int): RIS element count
        K (int): User count
        mode (Union[PilotMode, str]): Full or Half

    Returns:
        PilotBudget: Budget with tau = (N+1)K (Full) or (N/2+1)K (Half)

    Raises:
        ValueError: If N < 1, K < 1, or Half is requested with odd N
    """
    mode = PilotMode(mode)
    if N < 1 or K < 1:
        raise ValueError("N and K must be at least 1")
    if mode is PilotMode.HALF and N % 2:
        raise ValueError(f"Half pilot budget requires an even N, got N={N}")
    return PilotBudget(mode=mode, tau=PilotBudget.symbols(mode, N, K), N=N, K=K)


def reflection_patterns(N: int, slots: int) -> np.ndarray:
    """
    Columns of the (N+1)-point unitary DFT matrix, one per pilot slot.

    Row 0 scales the direct path, rows 1..N times sqrt(N+1) are the unit-modulus
    RIS states applied in each slot.

    Args:
        N (int): RIS element count
        slots (int): Number of pilot slots

    Returns:
        np.ndarray: (N+1) x slots matrix

    Raises:
        ValueError: If slots is not in 1..N+1
    """
    if slots < 1:
        raise ValueError("At least one pilot slot is required")
    if slots > N + 1:
        raise ValueError(f"Only {N + 1} distinct reflection patterns exist for N={N}")
    return linalg.dft(N + 1, scale="sqrtn")[:, :slots]


def _least_squares_user(h: np.ndarray, H: np.ndarray, P_UL: float, sigma_z2: float,
                        rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    N = H.shape[1]
    patterns = np.sqrt(N + 1) * reflection_patterns(N, N + 1)
    G = np.column_stack([h, H])
    noise = np.sqrt(sigma_z2) * circular_gaussian(rng, (h.shape[0], N + 1))
    Y = np.sqrt(P_UL) * G @ patterns + noise

    A = (np.sqrt(P_UL) * patterns).T
    solution, _, rank, _ = np.linalg.lstsq(A, Y.T, rcond=None)
    if rank < N + 1:
        raise EstimationError(f"Pilot pattern matrix has rank {rank} < {N + 1}")
    G_hat = solution.T
    return G_hat[:, 0], G_hat[:, 1:]


def estimate(true_channels: ChannelSet, budget: PilotBudget, groups: Groups,
             P_UL: float, sigma_z2: float, rng: np.random.Generator) -> EstimatedCsi:
    """
    Simulate uplink pilots and least-squares estimation under TDD reciprocity.

    Full: each user sends N+1 pilots while the RIS sweeps the DFT patterns.
    Half: the G^P user does the same; the G^N user sends one pilot with the RIS
    switched off, so only its direct channel is learned.

    Args:
        true_channels (ChannelSet): Channels of the block
        budget (PilotBudget): Pilot budget, its mode selects the protocol
        groups (Groups): (G^P, G^N) of the block
        P_UL (float): Uplink pilot power in watts
        sigma_z2 (float): BS noise power per antenna in watts
        rng (np.random.Generator): Source of the pilot noise

    Returns:
        EstimatedCsi: Estimates; H_hat is None for the G^N user under Half
    """
    G_P, G_N = frozenset(groups[0]), frozenset(groups[1])
    if P_UL <= 0:
        raise ValueError("Pilot power must be positive")
    if sigma_z2 < 0:
        raise ValueError("Noise power must not be negative")

    N = true_channels.U.shape[1]
    h_hat, H_hat = {}, {}
    slots = 0
    for k in true_channels.users:
        if budget.mode is PilotMode.FULL or k in G_P:
            h_hat[k], H_hat[k] = _least_squares_user(
                true_channels.h[k], true_channels.H[k], P_UL, sigma_z2, rng)
            slots += N + 1
        else:
            noise = np.sqrt(sigma_z2) * circular_gaussian(rng, true_channels.h[k].shape[0])
            h_hat[k] = (np.sqrt(P_UL) * true_channels.h[k] + noise) / np.sqrt(P_UL)
            H_hat[k] = None
            slots += 1

    if slots != budget.tau:
        raise ValueError(f"Pilot protocol used {slots} slots, budget is {budget.tau}")

    logger.debug("Estimated block %d CSI with %d pilots (%s)", true_channels.t, slots, budget.mode.value)
    return EstimatedCsi(
        t=true_channels.t,
        h_hat=h_hat,
        H_hat=H_hat,
        group_known=G_P,
        group_unknown=G_N,
        mode=budget.mode,
        tau_used=budget.tau,
        sigma_z2=sigma_z2,
        P_UL=P_UL,
    )


def perfect_csi(true_channels: ChannelSet, budget: PilotBudget, groups: Groups) -> EstimatedCsi:
    """Error-free CSI with the information structure of the pilot budget."""
    G_P, G_N = frozenset(groups[0]), frozenset(groups[1])
    H_hat = {
        k: (true_channels.H[k].copy() if budget.mode is PilotMode.FULL or k in G_P else None)
        for k in true_channels.users
    }
    return EstimatedCsi(
        t=true_channels.t,
        h_hat={k: v.copy() for k, v in true_channels.h.items()},
        H_hat=H_hat,
        group_known=G_P,
        group_unknown=G_N,
        mode=budget.mode,
        tau_used=budget.tau,
    )


def effective_estimate(csi: EstimatedCsi, theta: Union[PhaseConfig, np.ndarray], k: int) -> np.ndarray:
    """
    Effective channel of user k as the BS sees it.

    Args:
        csi (EstimatedCsi): Estimates of the block
        theta (Union[PhaseConfig, np.ndarray]): RIS phase vector of length N
        k (int): User id

    Returns:
        np.ndarray: h_hat + H_hat theta if H_hat is known, h_hat alone otherwise
    """
    theta = theta.theta if isinstance(theta, PhaseConfig) else np.asarray(theta)
    H_k = csi.H_hat[k]
    if H_k is None:
        return csi.h_hat[k].copy()
    if theta.shape[0] != H_k.shape[1]:
        raise ValueError(f"theta has length {theta.shape[0]}, expected {H_k.shape[1]}")
    return csi.h_hat[k] + H_k @ theta
