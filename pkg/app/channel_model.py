"""Scenario geometry and per-block channel generation.

Direct BS-user links are correlated Rayleigh (local-scattering ULA correlation at the
BS), the BS-RIS and RIS-user hops are planar-wave line-of-sight array responses. Every
random draw comes from an explicit ``numpy.random.Generator``.
"""
import logging
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from app.models import ChannelSet
from app.schemas import PathlossParams, Scenario, SimConfig

logger = logging.getLogger(__name__)


def ris_grid_shape(N: int) -> Tuple[int, int]:
    """Most square rows x cols factorisation of N (rows <= cols)."""
    rows = int(np.floor(np.sqrt(N)))
    while rows > 1 and N % rows:
        rows -= 1
    return rows, N // rows


def build_scenario(config: SimConfig, rng_seed: int, N: Optional[int] = None,
                   ris_grid: Optional[Tuple[int, int]] = None) -> Scenario:
    """
    Place BS, RIS and the two users.

    The BS sits at the origin and faces the RIS on the x axis; the user circle is
    centred ``user_center_distance`` in front of the RIS.

    Args:
        config (SimConfig): Experiment configuration (geometry, L, wavelength)
        rng_seed (int): Seed for the user drop
        N (Optional[int]): RIS size, defaults to the first entry of ``config.N_list``
        ris_grid (Optional[Tuple[int, int]]): Element grid, defaults to the most square one

    Returns:
        Scenario: Deterministic for a given seed

    Raises:
        ValueError: If the grid does not hold N elements
    """
    N = config.N_list[0] if N is None else N
    grid = ris_grid_shape(N) if ris_grid is None else tuple(ris_grid)
    if grid[0] * grid[1] != N:
        raise ValueError(f"RIS grid {grid[0]}x{grid[1]} does not hold N={N} elements")

    rng = np.random.default_rng(rng_seed)
    bs = np.zeros(3)
    ris = np.array([config.bs_ris_distance, 0.0, 0.0])
    angle = np.deg2rad(config.user_center_angle_deg)
    center = ris + config.user_center_distance * np.array([-np.cos(angle), np.sin(angle), 0.0])

    users = []
    for _ in range(2):
        radius = config.user_radius * np.sqrt(rng.uniform())
        phi = rng.uniform(0.0, 2 * np.pi)
        users.append(tuple(center + radius * np.array([np.cos(phi), np.sin(phi), 0.0])))

    return Scenario(
        bs_position=tuple(bs),
        ris_position=tuple(ris),
        user_positions=tuple(users),
        wavelength=config.wavelength,
        L=config.L,
        N=N,
        bs_spacing=config.wavelength / 2,
        ris_spacing=config.wavelength / 8,
        ris_grid=grid,
    )


def bs_antenna_offsets(scenario: Scenario) -> np.ndarray:
    """(L, 3) antenna offsets of the ULA along the y axis, centred on the BS."""
    idx = np.arange(scenario.L) - (scenario.L - 1) / 2
    offsets = np.zeros((scenario.L, 3))
    offsets[:, 1] = idx * scenario.bs_spacing
    return offsets


def ris_element_offsets(scenario: Scenario) -> np.ndarray:
    """(N, 3) element offsets of the RIS grid in the y-z plane, row-major."""
    rows, cols = scenario.ris_grid
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    offsets = np.zeros((scenario.N, 3))
    offsets[:, 1] = ((c - (cols - 1) / 2) * scenario.ris_spacing).ravel()
    offsets[:, 2] = ((r - (rows - 1) / 2) * scenario.ris_spacing).ravel()
    return offsets


def sinc_correlation(positions: np.ndarray, wavelength: float) -> np.ndarray:
    """Isotropic-scattering correlation sinc(2 d / lambda) between element positions."""
    diff = positions[:, np.newaxis, :] - positions[np.newaxis, :, :]
    distance = np.linalg.norm(diff, axis=-1)
    return np.sinc(2 * distance / wavelength).astype(complex)


def spatial_correlation(scenario: Scenario) -> np.ndarray:
    """N x N correlation matrix over the RIS element positions."""
    return sinc_correlation(ris_element_offsets(scenario), scenario.wavelength)


def ula_correlation(L: int, spacing: float, azimuth: float, angular_spread: float) -> np.ndarray:
    """
    Local-scattering correlation of a ULA with Gaussian angular spread.

    Args:
        L (int): Antenna count
        spacing (float): Antenna spacing in wavelengths
        azimuth (float): Nominal angle from broadside in radians
        angular_spread (float): Standard deviation of the angle in radians

    Returns:
        np.ndarray: Hermitian PSD L x L matrix with unit diagonal
    """
    lag = np.subtract.outer(np.arange(L), np.arange(L))
    phase = 2 * np.pi * spacing * lag
    return np.exp(1j * phase * np.sin(azimuth)) * np.exp(-0.5 * (angular_spread * phase * np.cos(azimuth)) ** 2)


def hermitian_sqrt(R: np.ndarray) -> np.ndarray:
    eigval, eigvec = linalg.eigh(R)
    return (eigvec * np.sqrt(np.clip(eigval, 0.0, None))) @ eigvec.conj().T


def circular_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def correlated_rayleigh(R: np.ndarray, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw h ~ CN(0, R); with ``size`` returns a (size, dim) stack of independent draws."""
    root = hermitian_sqrt(R)
    if size is None:
        return root @ circular_gaussian(rng, R.shape[0])
    return circular_gaussian(rng, (size, R.shape[0])) @ root.T


def array_response(offsets: np.ndarray, direction: np.ndarray, wavelength: float) -> np.ndarray:
    """Planar-wave response exp(j 2 pi p.u / lambda) of elements at ``offsets``."""
    return np.exp(2j * np.pi * (offsets @ direction) / wavelength)


def _unit(vector: np.ndarray) -> Tuple[np.ndarray, float]:
    distance = float(np.linalg.norm(vector))
    return vector / distance, distance


def _bs_azimuth(direction: np.ndarray) -> float:
    # the ULA lies along y, broadside is x
    return float(np.arcsin(np.clip(direction[1], -1.0, 1.0)))


def large_scale_fading(scenario: Scenario, pathloss: PathlossParams, k: int) -> float:
    """
    Statistical channel gain of user k, stable across blocks.

    Args:
        scenario (Scenario): Geometry
        pathloss (PathlossParams): Attenuation model
        k (int): User id (1 or 2)

    Returns:
        float: Direct-link gain plus the product gain of the two reflected hops
    """
    bs = np.asarray(scenario.bs_position)
    ris = np.asarray(scenario.ris_position)
    user = np.asarray(scenario.user_positions[k - 1])
    direct = pathloss.gain(np.linalg.norm(user - bs), pathloss.exponent_direct)
    reflected = (pathloss.gain(np.linalg.norm(ris - bs), pathloss.exponent_reflected)
                 * pathloss.gain(np.linalg.norm(user - ris), pathloss.exponent_reflected))
    return float(direct + reflected)


def sample_channels(scenario: Scenario, pathloss: PathlossParams, t: int,
                    rng: np.random.Generator) -> ChannelSet:
    """
    Draw the true channels of coherence block t.

    Args:
        scenario (Scenario): Geometry
        pathloss (PathlossParams): Attenuation model and LoS flags per link class
        t (int): Block index, 1 or 2
        rng (np.random.Generator): Source of the fading draws

    Returns:
        ChannelSet: h, U, q and the cascaded H = U diag(q) for both users
    """
    if t not in (1, 2):
        raise ValueError("Block index must be 1 or 2")

    lam = scenario.wavelength
    k_wave = 2 * np.pi / lam
    bs = np.asarray(scenario.bs_position)
    ris = np.asarray(scenario.ris_position)
    bs_offsets = bs_antenna_offsets(scenario)
    ris_offsets = ris_element_offsets(scenario)
    spread = np.deg2rad(pathloss.angular_spread_deg)
    spacing = scenario.bs_spacing / lam

    u_br, d_br = _unit(ris - bs)
    gain_br = pathloss.gain(d_br, pathloss.exponent_reflected)
    if pathloss.reflected_los:
        U = (np.sqrt(gain_br) * np.exp(-1j * k_wave * d_br)
             * np.outer(array_response(bs_offsets, u_br, lam), array_response(ris_offsets, -u_br, lam)))
    else:
        R_bs = ula_correlation(scenario.L, spacing, _bs_azimuth(u_br), spread)
        R_ris = spatial_correlation(scenario)
        G = circular_gaussian(rng, (scenario.L, scenario.N))
        U = np.sqrt(gain_br) * hermitian_sqrt(R_bs) @ G @ hermitian_sqrt(R_ris).T

    h, q, H = {}, {}, {}
    for k in (1, 2):
        user = np.asarray(scenario.user_positions[k - 1])
        u_bk, d_bk = _unit(user - bs)
        gain_bk = pathloss.gain(d_bk, pathloss.exponent_direct)
        if pathloss.direct_los:
            h[k] = np.sqrt(gain_bk) * np.exp(-1j * k_wave * d_bk) * array_response(bs_offsets, u_bk, lam)
        else:
            R = ula_correlation(scenario.L, spacing, _bs_azimuth(u_bk), spread)
            h[k] = np.sqrt(gain_bk) * correlated_rayleigh(R, rng)

        u_rk, d_rk = _unit(user - ris)
        gain_rk = pathloss.gain(d_rk, pathloss.exponent_reflected)
        if pathloss.reflected_los:
            q[k] = np.sqrt(gain_rk) * np.exp(-1j * k_wave * d_rk) * array_response(ris_offsets, u_rk, lam)
        else:
            q[k] = np.sqrt(gain_rk) * correlated_rayleigh(spatial_correlation(scenario), rng)
        H[k] = U * q[k][np.newaxis, :]

    logger.debug("Sampled block %d channels (L=%d, N=%d)", t, scenario.L, scenario.N)
    return ChannelSet(t=t, h=h, U=U, q=q, H=H)
