import pytest
from pydantic import ValidationError

from app.config import ConfigurationError, Settings, parse_config
from app.schemas import CsiMode, PilotBudget, PilotMode, Scheme, SimConfig, dbm_to_watts


def write(tmp_path, text):
    path = tmp_path / "experiment.cfg"
    path.write_text(text)
    return path


class TestParseConfig:
    """Test reading experiment configuration files."""

    def test_empty_file_gives_defaults(self, tmp_path):
        """Test that an empty file yields the default configuration."""
        config = parse_config(write(tmp_path, ""))

        assert config == SimConfig()
        assert config.L == 8
        assert config.T_coh == 2000
        assert config.P_Tr == pytest.approx(10.0)
        assert config.sigma_v2 == pytest.approx(1e-13)
        assert config.kappa == 1e4
        assert config.epsilon == 1.0

    def test_dbm_keys_converted_to_watts(self, tmp_path):
        """Test conversion of dBm keys."""
        config = parse_config(write(tmp_path, "P_Tr_dBm = 40\nP_UL_dBm = 20\n"))

        assert config.P_Tr == pytest.approx(10.0)
        assert config.P_UL == pytest.approx(0.1)

    def test_comments_and_lists(self, tmp_path):
        """Test comments, blank lines and comma-separated lists."""
        text = "# sweep\n\nN_list = 16, 4, 16  # duplicates collapse\nschemes = noma_half, ors\ncsi = imperfect\n"
        config = parse_config(write(tmp_path, text))

        assert config.N_list == [4, 16]
        assert config.schemes == [Scheme.ORS, Scheme.NOMA_HALF]
        assert config.csi is CsiMode.IMPERFECT

    def test_pilot_budget_exceeding_coherence_time(self, tmp_path):
        """Test that T_coh below the pilot budget is rejected."""
        path = write(tmp_path, "T_coh = 50\nN_list = 100\nschemes = noma_full\n")

        with pytest.raises(ConfigurationError, match="pilot budget 202 exceeds T_coh 50"):
            parse_config(path)

    def test_unknown_key(self, tmp_path):
        """Test that unknown keys are reported with their line."""
        with pytest.raises(ConfigurationError, match=r":2: unknown key 'antennas'"):
            parse_config(write(tmp_path, "L = 4\nantennas = 4\n"))

    def test_malformed_line(self, tmp_path):
        """Test that a line without '=' is rejected."""
        with pytest.raises(ConfigurationError, match=r":1: expected 'key = value'"):
            parse_config(write(tmp_path, "L 4\n"))

    def test_duplicate_key(self, tmp_path):
        """Test that repeated keys are rejected."""
        with pytest.raises(ConfigurationError, match="set twice"):
            parse_config(write(tmp_path, "L = 4\nL = 8\n"))

    def test_out_of_range_value_names_line(self, tmp_path):
        """Test that validation errors carry the offending line."""
        with pytest.raises(ConfigurationError, match=r":3: L: .*at least 1"):
            parse_config(write(tmp_path, "drops = 2\n\nL = 0\n"))

    def test_bad_dbm_value(self, tmp_path):
        """Test that a non-numeric dBm value is rejected."""
        with pytest.raises(ConfigurationError, match="must be a number"):
            parse_config(write(tmp_path, "P_Tr_dBm = loud\n"))

    def test_odd_n_with_half_budget(self, tmp_path):
        """Test that Half schemes need an even RIS size."""
        with pytest.raises(ConfigurationError, match="even N"):
            parse_config(write(tmp_path, "N_list = 9\n"))

    def test_odd_n_without_half_schemes(self, tmp_path):
        """Test that odd N is accepted when only the Full budget is used."""
        config = parse_config(write(tmp_path, "N_list = 9, 25\nschemes = noma_full\n"))

        assert config.N_list == [9, 25]

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            parse_config(tmp_path / "absent.cfg")


class TestSimConfig:
    """Test SimConfig validation."""

    def test_extra_fields_forbidden(self):
        """Test that unknown fields are rejected."""
        with pytest.raises(ValidationError):
            SimConfig(antennas=4)

    def test_empty_scheme_list(self):
        """Test that at least one scheme is required."""
        with pytest.raises(ValidationError, match="at least one scheme"):
            SimConfig(schemes=[])

    def test_pathloss_parameters(self):
        """Test that pathloss parameters follow the configuration."""
        pathloss = SimConfig(reference_gain_dB=-20.0, exponent_direct=3.0).pathloss

        assert pathloss.reference_gain == pytest.approx(1e-2)
        assert pathloss.exponent_direct == 3.0
        assert pathloss.gain(10.0, 3.0) == pytest.approx(1e-5)


class TestPilotBudgetModel:
    """Test the PilotBudget model."""

    def test_symbols(self):
        """Test pilot symbol counts of both modes."""
        assert PilotBudget.symbols(PilotMode.FULL, 100, 2) == 202
        assert PilotBudget.symbols(PilotMode.HALF, 100, 2) == 102

    def test_inconsistent_tau(self):
        """Test that tau must match the mode."""
        with pytest.raises(ValidationError, match="tau does not match"):
            PilotBudget(mode=PilotMode.FULL, tau=10, N=4, K=2)


class TestSettings:
    """Test runtime settings."""

    def test_defaults(self):
        """Test default runtime settings."""
        runtime = Settings()

        assert runtime.solver == "CLARABEL"
        assert runtime.max_workers == 1

    def test_environment_override(self, monkeypatch):
        """Test ORS_-prefixed environment variables."""
        monkeypatch.setenv("ORS_SOLVER", "SCS")
        monkeypatch.setenv("ORS_MAX_WORKERS", "4")
        runtime = Settings()

        assert runtime.solver == "SCS"
        assert runtime.max_workers == 4

    def test_dbm_to_watts(self):
        """Test the dBm conversion."""
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(-100.0) == pytest.approx(1e-13)
