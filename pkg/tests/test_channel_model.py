import numpy as np
import pytest

from app.channel_model import (bs_antenna_offsets, build_scenario, correlated_rayleigh, hermitian_sqrt,
                               large_scale_fading, ris_element_offsets, ris_grid_shape, sample_channels,
                               sinc_correlation, spatial_correlation, ula_correlation)
from app.schemas import PathlossParams, SimConfig


@pytest.fixture
def config():
    return SimConfig(L=4, N_list=[16])


class TestScenario:
    """Test geometry construction."""

    def test_grid_shapes(self):
        """Test the most square RIS grid."""
        assert ris_grid_shape(64) == (8, 8)
        assert ris_grid_shape(16) == (4, 4)
        assert ris_grid_shape(8) == (2, 4)
        assert ris_grid_shape(7) == (1, 7)

    def test_same_seed_same_drop(self, config):
        """Test that the user drop is reproducible."""
        assert build_scenario(config, 3) == build_scenario(config, 3)
        assert build_scenario(config, 3) != build_scenario(config, 4)

    def test_users_inside_circle(self, config):
        """Test that users fall inside the user circle."""
        angle = np.deg2rad(config.user_center_angle_deg)
        center = np.array([config.bs_ris_distance, 0.0, 0.0]) + config.user_center_distance * np.array(
            [-np.cos(angle), np.sin(angle), 0.0])
        for seed in range(20):
            scenario = build_scenario(config, seed)
            for user in scenario.user_positions:
                assert np.linalg.norm(np.asarray(user) - center) <= config.user_radius + 1e-9
                assert user[2] == 0.0

    def test_bad_grid(self, config):
        """Test that a grid not holding N elements is rejected."""
        with pytest.raises(ValueError, match="does not hold"):
            build_scenario(config, 0, N=16, ris_grid=(3, 5))

    def test_element_offsets(self, config):
        """Test array layouts: ULA along y, RIS grid in the y-z plane."""
        scenario = build_scenario(config, 0)
        bs = bs_antenna_offsets(scenario)
        ris = ris_element_offsets(scenario)

        assert bs.shape == (4, 3)
        assert np.allclose(bs[:, [0, 2]], 0.0)
        assert np.allclose(np.diff(bs[:, 1]), scenario.wavelength / 2)
        assert ris.shape == (16, 3)
        assert np.allclose(ris[:, 0], 0.0)
        assert np.allclose(ris.mean(axis=0), 0.0)


class TestCorrelation:
    """Test spatial correlation models."""

    def test_sinc_correlation(self):
        """Test the sinc kernel at half-wavelength spacing."""
        positions = np.array([[0.0, 0.0, 0.0], [0.0, 0.05, 0.0]])
        R = sinc_correlation(positions, wavelength=0.1)

        assert np.allclose(np.diag(R), 1.0)
        assert abs(R[0, 1]) < 1e-12

    def test_ris_correlation_is_hermitian_psd(self, config):
        """Test the RIS correlation matrix."""
        R = spatial_correlation(build_scenario(config, 0))

        assert np.allclose(R, R.conj().T)
        assert np.min(np.linalg.eigvalsh(R)) > -1e-9

    def test_ula_correlation(self):
        """Test the local-scattering ULA correlation."""
        R = ula_correlation(8, 0.5, np.deg2rad(30.0), np.deg2rad(10.0))

        assert np.allclose(np.diag(R), 1.0)
        assert np.allclose(R, R.conj().T)
        assert np.min(np.linalg.eigvalsh(R)) > -1e-9

    def test_hermitian_sqrt(self):
        """Test that the root squares back to the matrix."""
        R = ula_correlation(4, 0.5, 0.3, 0.2)
        root = hermitian_sqrt(R)

        assert np.allclose(root @ root, R, atol=1e-10)

    def test_correlated_rayleigh_covariance(self):
        """Test the sample covariance of correlated Rayleigh draws."""
        R = ula_correlation(4, 0.5, 0.3, 0.2)
        samples = correlated_rayleigh(R, np.random.default_rng(0), size=40000)
        sample_cov = samples.T @ samples.conj() / samples.shape[0]

        assert samples.shape == (40000, 4)
        assert np.max(np.abs(sample_cov - R)) < 0.05


class TestChannels:
    """Test per-block channel draws."""

    def test_cascaded_channel(self, config):
        """Test H_k = U diag(q_k) and the array shapes."""
        scenario = build_scenario(config, 1)
        channels = sample_channels(scenario, config.pathloss, 1, np.random.default_rng(2))

        assert channels.U.shape == (4, 16)
        for k in (1, 2):
            assert channels.h[k].shape == (4,)
            assert np.allclose(channels.H[k], channels.U @ np.diag(channels.q[k]), rtol=0, atol=1e-15)
            assert channels.effective(k, np.ones(16)).shape == (4,)

    def test_reproducible(self, config):
        """Test that the same generator seed gives the same channels."""
        scenario = build_scenario(config, 1)
        first = sample_channels(scenario, config.pathloss, 2, np.random.default_rng(9))
        second = sample_channels(scenario, config.pathloss, 2, np.random.default_rng(9))

        assert all(np.array_equal(first.h[k], second.h[k]) for k in (1, 2))
        assert np.array_equal(first.U, second.U)

    def test_nlos_reflected_links(self, config):
        """Test correlated Rayleigh draws for NLoS reflected links."""
        scenario = build_scenario(config, 1)
        pathloss = PathlossParams(reflected_los=False, exponent_reflected=2.5)
        channels = sample_channels(scenario, pathloss, 1, np.random.default_rng(3))

        assert channels.U.shape == (4, 16)
        assert np.all(np.isfinite(channels.H[1]))

    def test_invalid_block(self, config):
        """Test that only blocks 1 and 2 exist."""
        with pytest.raises(ValueError, match="1 or 2"):
            sample_channels(build_scenario(config, 1), config.pathloss, 3, np.random.default_rng(0))

    def test_large_scale_fading(self, config):
        """Test that the LSF is positive and shrinks with distance."""
        scenario = build_scenario(config, 1)
        near = large_scale_fading(scenario, config.pathloss, 1)
        far = large_scale_fading(scenario, SimConfig(L=4, N_list=[16], exponent_direct=4.0).pathloss, 1)

        assert near > 0
        assert far < near


@pytest.mark.slow
class TestChannelStatistics:
    """Test Monte Carlo statistics of the direct links."""

    def test_direct_link_pathloss_exponent(self, config):
        """Test that doubling the BS distance scales the mean direct gain by 2^-3.5."""
        scenario = build_scenario(config, 1).model_copy(update={"user_positions": ((50.0, 50.0, 0.0),
                                                                                   (100.0, 100.0, 0.0))})
        rng = np.random.default_rng(21)
        power = np.zeros(2)
        for _ in range(10_000):
            channels = sample_channels(scenario, config.pathloss, 1, rng)
            power += [np.vdot(channels.h[k], channels.h[k]).real for k in (1, 2)]

        assert power[0] / power[1] == pytest.approx(2 ** 3.5, rel=0.05)

    def test_blocks_are_independent(self, config):
        """Test that the direct links of the two blocks are uncorrelated."""
        scenario = build_scenario(config, 1)
        rng = np.random.default_rng(22)
        draws = []
        for _ in range(10_000):
            first, second = (sample_channels(scenario, config.pathloss, t, rng) for t in (1, 2))
            draws.append((first.h[1][0], second.h[1][0]))
        a, b = np.array(draws).T
        rho = np.vdot(a, b) / np.sqrt(np.vdot(a, a).real * np.vdot(b, b).real)

        assert abs(rho) < 0.05
