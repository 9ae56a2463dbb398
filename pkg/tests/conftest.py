import numpy as np
import pytest

from app.channel_estimation import perfect_csi, pilot_budget
from app.channel_model import build_scenario, sample_channels
from app.ors_core import assign_groups, downlink_bandwidth
from app.sca_optimizer import BlockParams
from app.schemas import PilotMode, SimConfig


@pytest.fixture
def small_config():
    """Desk-scale configuration: two antennas, four RIS elements, short SCA runs."""
    return SimConfig(L=2, N_list=[4], drops=1, max_iterations=8, base_seed=7)


@pytest.fixture
def small_blocks(small_config):
    """True channels of both blocks for one drop of the small configuration."""
    scenario = build_scenario(small_config, rng_seed=11, N=4)
    rng = np.random.default_rng(5)
    return [sample_channels(scenario, small_config.pathloss, t, rng) for t in (1, 2)]


@pytest.fixture
def half_csi(small_blocks):
    """Masked error-free CSI of both blocks under the Half budget."""
    budget = pilot_budget(4, 2, PilotMode.HALF)
    return [perfect_csi(block, budget, assign_groups(block.t)) for block in small_blocks]


@pytest.fixture
def full_csi(small_blocks):
    """Error-free CSI of both blocks under the Full budget."""
    budget = pilot_budget(4, 2, PilotMode.FULL)
    return [perfect_csi(block, budget, assign_groups(block.t)) for block in small_blocks]


@pytest.fixture
def block_params(small_config):
    """Optimizer parameters matching the small configuration and the Half budget."""
    tau = pilot_budget(4, 2, PilotMode.HALF).tau
    return BlockParams(
        P_Tr=small_config.P_Tr,
        sigma_v2=small_config.sigma_v2,
        B_DL=downlink_bandwidth(small_config.B, tau, small_config.T_coh),
        alpha_ors=0.5,
        kappa=small_config.kappa,
        epsilon=small_config.epsilon,
        rel_tol=small_config.rel_tol,
        max_iterations=small_config.max_iterations,
    )
