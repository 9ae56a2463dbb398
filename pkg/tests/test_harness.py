import csv

import numpy as np
import pytest

from app import harness
from app.config import Settings
from app.harness import (RESULT_HEADER, aggregate, child_seed, paired_sign_test, rank_trend, run_drop, sweep,
                         write_plotdata, write_results)
from app.schemas import CsiMode, DropResult, ResultRow, Scheme, SimConfig, SolveStatus


def make_result(drop_index, r_net, status=SolveStatus.CONVERGED, scheme=Scheme.ORS):
    return DropResult(scheme=scheme, csi=CsiMode.PERFECT, N=4, drop_index=drop_index, seed=1, r_net=r_net,
                      xi_obj=r_net + 1.0, r_p=[r_net / 2, r_net / 2], r_n=[r_net / 2, r_net / 2],
                      r_c_candidate=[0.0, 0.0], r_c=0.0, b_dl=[1.0, 1.0], tau=[6, 6], iterations=[1, 1],
                      status=status)


def make_row(scheme, N, mean=1.0):
    return ResultRow(scheme=scheme, csi=CsiMode.PERFECT, N=N, drops=2, mean_Rnet_bps=mean, se_Rnet_bps=0.5,
                     mean_obj_bps=mean, se_obj_bps=0.25, infeasible_count=0)


class TestSeeds:
    """Test child-seed derivation."""

    def test_deterministic_and_distinct(self):
        """Test that seeds repeat for equal inputs and differ otherwise."""
        assert child_seed(2024, 16, 3) == child_seed(2024, 16, 3)
        assert len({child_seed(2024, N, d) for N in (4, 16) for d in range(10)}) == 20
        assert 0 <= child_seed(2024, 16, 3) < 2 ** 64


class TestAggregate:
    """Test per-scheme aggregation."""

    def test_infeasible_drops_excluded_but_counted(self):
        """Test that infeasible drops do not enter the mean."""
        results = [make_result(0, 10.0), make_result(1, 20.0), make_result(2, 0.0, SolveStatus.INFEASIBLE)]
        (row,) = aggregate(results, drops=3)

        assert row.mean_Rnet_bps == pytest.approx(15.0)
        assert row.se_Rnet_bps == pytest.approx(5.0)
        assert row.mean_obj_bps == pytest.approx(16.0)
        assert row.infeasible_count == 1
        assert row.drops == 3

    def test_single_drop_has_zero_error(self):
        """Test the standard error of a single drop."""
        (row,) = aggregate([make_result(0, 10.0)], drops=1)

        assert row.se_Rnet_bps == 0.0

    def test_recombination(self):
        """Test that stored components rebuild the net rate."""
        result = make_result(0, 12.0)

        assert result.recombined_net() == pytest.approx(result.r_net, abs=1e-9)


class TestResultFiles:
    """Test the CSV and plot-data writers."""

    def test_empty_table(self, tmp_path):
        """Test that an empty table gives a header-only file."""
        path = write_results([], tmp_path / "results.csv")

        assert path.read_text() == ",".join(RESULT_HEADER) + "\n"

    def test_rows_sorted_and_parseable(self, tmp_path):
        """Test row order and CSV round trip."""
        rows = [make_row(Scheme.ORS, 16), make_row(Scheme.NOMA_HALF, 4), make_row(Scheme.ORS, 4, mean=2.5)]
        path = write_results(rows, tmp_path / "results.csv")
        text = path.read_text()
        parsed = list(csv.DictReader(text.splitlines()))

        assert text.endswith("\n")
        assert [(r["scheme"], r["N"]) for r in parsed] == [("noma_half", "4"), ("ors", "4"), ("ors", "16")]
        assert float(parsed[1]["mean_Rnet_bps"]) == 2.5
        assert parsed[0]["csi"] == "perfect"

    def test_unwritable_path(self, tmp_path):
        """Test that I/O errors name the path."""
        target = tmp_path / "missing" / "results.csv"

        with pytest.raises(OSError, match="results.csv"):
            write_results([], target)

    def test_plotdata_blocks(self, tmp_path):
        """Test one tab-separated block per scheme."""
        rows = [make_row(Scheme.ORS, 4), make_row(Scheme.ORS, 16, mean=2.0), make_row(Scheme.NOMA_FULL, 4)]
        blocks = write_plotdata(rows, tmp_path / "plot.dat").read_text().split("\n\n")

        assert len(blocks) == 2
        assert blocks[0].splitlines() == ["# noma_full (perfect)", "4\t1.0\t0.5"]
        assert blocks[1].splitlines() == ["# ors (perfect)", "4\t1.0\t0.5", "16\t2.0\t0.5"]


class TestStatistics:
    """Test the trend helpers."""

    def test_sign_test(self):
        """Test the one-sided paired sign test."""
        assert paired_sign_test([2.0] * 10, [1.0] * 10) == pytest.approx(0.5 ** 10)
        assert paired_sign_test([1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_sign_test_lengths(self):
        """Test that paired samples must match."""
        with pytest.raises(ValueError, match="equal length"):
            paired_sign_test([1.0], [1.0, 2.0])

    def test_rank_trend(self):
        """Test the Spearman trend of a mean curve."""
        assert rank_trend([4, 16, 36], [1.0, 2.0, 3.0]) == pytest.approx(1.0)
        assert rank_trend([4, 16, 36], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)


@pytest.mark.slow
class TestRunDrop:
    """Test the per-drop pipeline."""

    def test_all_schemes(self, small_config):
        """Test one result per scheme with consistent components."""
        results = run_drop(small_config, 4, 0)

        assert [r.scheme for r in results] == list(Scheme)
        for result in results:
            assert np.isfinite(result.r_net) and result.r_net >= 0
            assert np.isfinite(result.xi_obj) and result.xi_obj >= 0
            assert result.recombined_net() == pytest.approx(result.r_net, abs=1e-9)
        noma_full, noma_half = results[1], results[2]
        assert noma_half.b_dl[0] > noma_full.b_dl[0]
        assert results[1].r_c == 0.0

    def test_reproducible(self, small_config):
        """Test that a drop is bit-identical when repeated."""
        first = [r.model_dump() for r in run_drop(small_config, 4, 1)]
        second = [r.model_dump() for r in run_drop(small_config, 4, 1)]

        assert first == second

    def test_scheme_subset_is_paired(self, small_config):
        """Test that running one scheme reproduces its numbers from the full run."""
        full = run_drop(small_config, 4, 2)
        only_ors = run_drop(small_config.model_copy(update={"schemes": [Scheme.ORS]}), 4, 2)

        assert only_ors[0].model_dump() == full[0].model_dump()

    def test_imperfect_csi(self, small_config):
        """Test the pipeline with estimated channels."""
        results = run_drop(small_config, 4, 0, csi=CsiMode.IMPERFECT)

        assert all(r.csi is CsiMode.IMPERFECT for r in results)
        assert all(np.isfinite(r.r_net) for r in results)

    def test_noma_scored_with_sic(self, small_config, monkeypatch):
        """Test that NOMA drops are scored with SIC at the G^P user and ORS drops without."""
        scored = []
        for name in ("evaluate_true", "evaluate_true_noma"):
            original = getattr(harness, name)

            def spy(*args, _name=name, _original=original, **kwargs):
                scored.append(_name)
                return _original(*args, **kwargs)

            monkeypatch.setattr(harness, name, spy)
        run_drop(small_config, 4, 0)

        assert scored == ["evaluate_true", "evaluate_true_noma", "evaluate_true_noma"]


@pytest.mark.slow
class TestSweep:
    """Test the sweep and its output."""

    def test_one_row_per_scheme_and_byte_identical(self, small_config, tmp_path):
        """Test the table shape and reproducible CSV bytes."""
        runtime = Settings(max_workers=1)
        rows, results = sweep(small_config, runtime)
        again, _ = sweep(small_config, runtime)

        assert len(rows) == 3
        assert len(results) == 3
        first = write_results(rows, tmp_path / "a.csv").read_bytes()
        second = write_results(again, tmp_path / "b.csv").read_bytes()
        assert first == second

    def test_traces_written(self, small_config, tmp_path):
        """Test iteration traces per scheme and block."""
        config = small_config.model_copy(update={"schemes": [Scheme.ORS]})
        sweep(config, Settings(max_workers=1), trace_dir=tmp_path)

        traces = sorted(p.name for p in tmp_path.iterdir())
        assert traces == ["ors_perfect_N4_drop0_t1.csv", "ors_perfect_N4_drop0_t2.csv"]


def paired_rates(results, scheme, N):
    """Net rates of one scheme at one N, ordered by drop."""
    picked = sorted((r for r in results if r.scheme is scheme and r.N == N), key=lambda r: r.drop_index)
    return [r.r_net for r in picked]


@pytest.fixture(scope="class")
def trend_results():
    """Per-drop results of 50 drops at N = 36 and 64 under both CSI modes."""
    config = SimConfig(N_list=[36, 64], drops=50)
    runtime = Settings(max_workers=4)
    return {csi: sweep(config, runtime, csi=csi)[1] for csi in CsiMode}


@pytest.mark.slow
class TestTrends:
    """Test the scheme orderings over many drops."""

    def test_ors_beats_noma_half(self, trend_results):
        """Test that ORS outperforms NOMA with the Half budget at every N."""
        results = trend_results[CsiMode.PERFECT]
        for N in (36, 64):
            ors = paired_rates(results, Scheme.ORS, N)
            assert paired_sign_test(ors, paired_rates(results, Scheme.NOMA_HALF, N)) < 0.05

    def test_half_budget_beats_full_at_large_n(self, trend_results):
        """Test that the shorter pilot phase pays off at N = 64."""
        results = trend_results[CsiMode.PERFECT]
        half = paired_rates(results, Scheme.NOMA_HALF, 64)

        assert paired_sign_test(half, paired_rates(results, Scheme.NOMA_FULL, 64)) < 0.05

    def test_gain_grows_with_estimation_error(self, trend_results):
        """Test that the ORS gain over NOMA with the Full budget is larger under imperfect CSI."""
        gains = {}
        for csi, results in trend_results.items():
            ors = np.array(paired_rates(results, Scheme.ORS, 64))
            full = np.array(paired_rates(results, Scheme.NOMA_FULL, 64))
            gains[csi] = float(np.mean(ors - full))

        assert gains[CsiMode.IMPERFECT] > gains[CsiMode.PERFECT]
