"""Rate algebra of opportunistic rate splitting (and its NOMA counterpart)."""
import logging
from typing import Callable, FrozenSet, Sequence, Tuple

import numpy as np

from app.channel_estimation import effective_estimate
from app.models import (BeamformerSet, BlockSolution, ChannelSet, EstimatedCsi, NomaSinrs,
                        RateReport, SinrTriple)

logger = logging.getLogger(__name__)

ALPHA_MAX = 10.0


def assign_groups(t: int) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """
    Users whose cascaded channel is known (G^P) and unknown (G^N) in block t.

    The known user carries the block index, so the roles swap between blocks.
    """
    if t not in (1, 2):
        raise ValueError("Block index must be 1 or 2")
    return frozenset({t}), frozenset({3 - t})


def received_power(h: np.ndarray, w: np.ndarray) -> float:
    """|h^H w|^2"""
    return float(np.abs(np.vdot(h, w)) ** 2)


def _check_noise(sigma_v2: float) -> None:
    if sigma_v2 <= 0:
        raise ValueError("Receiver noise power must be positive")


def compute_sinrs(h_eff_P: np.ndarray, h_eff_N: np.ndarray, w: BeamformerSet, sigma_v2: float) -> SinrTriple:
    """
    SINRs of the rate-splitting streams in one block.

    The G^P user decodes the common stream first (both private streams interfere),
    removes it and decodes its private stream. The G^N user has already removed the
    common stream with the message decoded in the other block.

    Args:
        h_eff_P (np.ndarray): Effective channel of the G^P user
        h_eff_N (np.ndarray): Effective channel of the G^N user
        w (BeamformerSet): Beamformers of the block
        sigma_v2 (float): Receiver noise power in watts

    Returns:
        SinrTriple: Linear SINRs gamma_P, gamma_c, gamma_N
    """
    _check_noise(sigma_v2)
    p_pp = received_power(h_eff_P, w.w_P)
    p_pn = received_power(h_eff_P, w.w_N)
    p_pc = received_power(h_eff_P, w.w_c)
    p_nn = received_power(h_eff_N, w.w_N)
    p_np = received_power(h_eff_N, w.w_P)
    return SinrTriple(
        gamma_P=p_pp / (p_pn + sigma_v2),
        gamma_c=p_pc / (p_pp + p_pn + sigma_v2),
        gamma_N=p_nn / (p_np + sigma_v2),
    )


def compute_noma_sinrs(h_eff_P: np.ndarray, h_eff_N: np.ndarray, w: BeamformerSet, sigma_v2: float) -> NomaSinrs:
    """SIC SINRs when the G^P user decodes and cancels the G^N user's stream first."""
    _check_noise(sigma_v2)
    p_pp = received_power(h_eff_P, w.w_P)
    p_pn = received_power(h_eff_P, w.w_N)
    p_nn = received_power(h_eff_N, w.w_N)
    p_np = received_power(h_eff_N, w.w_P)
    return NomaSinrs(
        gamma_P=p_pp / sigma_v2,
        gamma_PN=p_pn / (p_pp + sigma_v2),
        gamma_N=p_nn / (p_np + sigma_v2),
    )


def downlink_bandwidth(B: float, tau: int, T_coh: int) -> float:
    """
    Bandwidth left for downlink data after channel estimation.

    Args:
        B (float): Total bandwidth in Hz
        tau (int): Pilot symbols per block
        T_coh (int): Symbols per coherence block

    Returns:
        float: B (1 - tau / T_coh)

    Raises:
        ValueError: If tau is negative or leaves no downlink time
    """
    if tau < 0:
        raise ValueError("Pilot count cannot be negative")
    if tau >= T_coh:
        raise ValueError(f"Pilot budget {tau} leaves no downlink time in a block of {T_coh} symbols")
    return B * (T_coh - tau) / T_coh


def rate(gamma: float, B_DL: float) -> float:
    return B_DL * float(np.log2(1.0 + gamma))


def achievable_rates(sinrs: SinrTriple, B_DL: float) -> Tuple[float, float, float]:
    """
    Rates meeting the achievability bounds with equality.

    Returns:
        Tuple[float, float, float]: (R_P, R_c candidate, R_N) in bit/s
    """
    if B_DL <= 0:
        raise ValueError("Downlink bandwidth must be positive")
    return rate(sinrs.gamma_P, B_DL), rate(sinrs.gamma_c, B_DL), rate(sinrs.gamma_N, B_DL)


def noma_rates(sinrs: NomaSinrs, B_DL: float) -> Tuple[float, float]:
    """(R_P, R_N); the G^N stream must be decodable at both receivers."""
    if B_DL <= 0:
        raise ValueError("Downlink bandwidth must be positive")
    return rate(sinrs.gamma_P, B_DL), rate(min(sinrs.gamma_PN, sinrs.gamma_N), B_DL)


def net_rate(r_p: Sequence[float], r_n: Sequence[float], r_c_candidate: Sequence[float],
             b_dl: Sequence[float], tau: Sequence[int]) -> RateReport:
    """
    Combine both blocks into the net rate.

    The common rate is the smallest per-block candidate and, being sent twice,
    counts half in each block.

    Args:
        r_p (Sequence[float]): Private rate of the G^P user per block
        r_n (Sequence[float]): Private rate of the G^N user per block
        r_c_candidate (Sequence[float]): Decodable common rate per block
        b_dl (Sequence[float]): Downlink bandwidth per block
        tau (Sequence[int]): Pilot symbols per block

    Returns:
        RateReport: Report with R_c and R_net filled in
    """
    if not (len(r_p) == len(r_n) == len(r_c_candidate) == 2):
        raise ValueError("Net rate combines exactly two blocks")
    r_c = min(r_c_candidate)
    r_net = 0.5 * sum(p + n + 0.5 * r_c for p, n in zip(r_p, r_n))
    return RateReport(
        r_p=list(r_p),
        r_n=list(r_n),
        r_c_candidate=list(r_c_candidate),
        r_c=r_c,
        r_net=r_net,
        b_dl=list(b_dl),
        tau=list(tau),
    )


def lsf_ratio(lsf_1: float, lsf_2: float) -> float:
    """Gamma = max(LSF_1/LSF_2, LSF_2/LSF_1) >= 1."""
    if lsf_1 <= 0 or lsf_2 <= 0:
        raise ValueError("Large-scale fading gains must be positive")
    return max(lsf_1 / lsf_2, lsf_2 / lsf_1)


def ors_ratio(lsf_1: float, lsf_2: float, alpha_max: float = ALPHA_MAX) -> float:
    """
    ORS ratio from the large-scale fading asymmetry of the two users.

    Args:
        lsf_1 (float): Linear LSF of user 1
        lsf_2 (float): Linear LSF of user 2
        alpha_max (float): Cap applied where the formula diverges (Gamma -> 1)

    Returns:
        float: 1 / log2((1 + Gamma) / (1 + 1/Gamma)), at most alpha_max
    """
    gamma = lsf_ratio(lsf_1, lsf_2)
    spread = np.log2((1 + gamma) / (1 + 1 / gamma))
    if spread <= 1 / alpha_max:
        return alpha_max
    return float(1 / spread)


ChannelFn = Callable[[int, int, np.ndarray], np.ndarray]


def _evaluate(solutions: Sequence[BlockSolution], channel: ChannelFn, sigma_v2: float,
              b_dl: Sequence[float], tau: Sequence[int], noma: bool) -> RateReport:
    r_p, r_n, r_c = [], [], []
    for index, solution in enumerate(solutions):
        G_P, G_N = assign_groups(solution.t)
        p, n = next(iter(G_P)), next(iter(G_N))
        theta = solution.theta_star.theta
        h_P, h_N = channel(index, p, theta), channel(index, n, theta)
        if noma:
            rates = noma_rates(compute_noma_sinrs(h_P, h_N, solution.w_star, sigma_v2), b_dl[index])
            r_p.append(rates[0])
            r_n.append(rates[1])
            r_c.append(0.0)
        else:
            R_P, R_c, R_N = achievable_rates(compute_sinrs(h_P, h_N, solution.w_star, sigma_v2), b_dl[index])
            r_p.append(R_P)
            r_n.append(R_N)
            r_c.append(R_c)
    return net_rate(r_p, r_n, r_c, b_dl, tau)


def evaluate_true(solutions: Sequence[BlockSolution], channels: Sequence[ChannelSet], sigma_v2: float,
                  b_dl: Sequence[float], tau: Sequence[int], noma: bool = False) -> RateReport:
    """
    Actual rates of both blocks' solutions on the true channels h + H theta.

    Includes the interference through cascaded channels the optimizer never saw.

    Args:
        solutions (Sequence[BlockSolution]): Solutions of block 1 and block 2
        channels (Sequence[ChannelSet]): True channels of block 1 and block 2
        sigma_v2 (float): Receiver noise power in watts
        b_dl (Sequence[float]): Downlink bandwidth per block
        tau (Sequence[int]): Pilot symbols per block
        noma (bool): Evaluate the private-only SIC scheme instead of rate splitting

    Returns:
        RateReport: True-channel rates and net rate
    """
    return _evaluate(solutions, lambda i, k, theta: channels[i].effective(k, theta),
                     sigma_v2, b_dl, tau, noma)


def evaluate_estimated(solutions: Sequence[BlockSolution], csis: Sequence[EstimatedCsi], sigma_v2: float,
                       b_dl: Sequence[float], tau: Sequence[int], noma: bool = False) -> RateReport:
    """Rates the optimizer predicts, using the estimated (possibly partial) channels."""
    return _evaluate(solutions, lambda i, k, theta: effective_estimate(csis[i], theta, k),
                     sigma_v2, b_dl, tau, noma)


def evaluate_true_noma(solutions: Sequence[BlockSolution], channels: Sequence[ChannelSet], sigma_v2: float,
                       b_dl: Sequence[float], tau: Sequence[int]) -> RateReport:
    """True-channel rates of NOMA solutions; R_c is zero."""
    return evaluate_true(solutions, channels, sigma_v2, b_dl, tau, noma=True)
