import pytest

from app.cli import EXIT_CONFIG, EXIT_OK, build_parser, main

SMALL = "L = 2\nN_list = 4\ndrops = 1\nmax_iterations = 4\nschemes = ors\n"


class TestParser:
    """Test command-line parsing."""

    def test_run_arguments(self):
        """Test the run subcommand options."""
        args = build_parser().parse_args(["run", "--config", "x.cfg", "--out", "r.csv", "--drops", "3",
                                          "--csi", "imperfect", "--emit-plotdata", "p.dat"])

        assert args.command == "run"
        assert args.drops == 3
        assert args.csi == "imperfect"
        assert args.plotdata == "p.dat"

    def test_invalid_csi(self):
        """Test that unknown CSI modes are rejected by the parser."""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run", "--config", "x", "--out", "y", "--csi", "partial"])


class TestMain:
    """Test exit codes of the CLI."""

    def test_missing_config(self, tmp_path):
        """Test exit code 2 for a missing configuration file."""
        assert main(["run", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "r.csv")]) == EXIT_CONFIG

    def test_bad_override(self, tmp_path):
        """Test exit code 2 for an invalid scheme override."""
        config = tmp_path / "small.cfg"
        config.write_text(SMALL)

        code = main(["run", "--config", str(config), "--out", str(tmp_path / "r.csv"), "--schemes", "tdma"])
        assert code == EXIT_CONFIG

    @pytest.mark.slow
    def test_run_writes_results(self, tmp_path):
        """Test a small end-to-end run."""
        config = tmp_path / "small.cfg"
        config.write_text(SMALL)
        out, plot = tmp_path / "results.csv", tmp_path / "plot.dat"

        code = main(["run", "--config", str(config), "--out", str(out), "--seed", "3", "--emit-plotdata", str(plot)])

        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "scheme,csi,N,drops,mean_Rnet_bps,se_Rnet_bps,mean_obj_bps,se_obj_bps,infeasible_count"
        assert lines[1].startswith("ors,perfect,4,1,")
        assert plot.read_text().startswith("# ors (perfect)\n4\t")
