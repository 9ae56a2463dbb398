"""Seeded Monte Carlo driver: drops, N sweeps, aggregation and result files."""
import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app.baselines import solve_noma_block
from app.channel_estimation import estimate, perfect_csi, pilot_budget
from app.channel_model import build_scenario, large_scale_fading, sample_channels
from app.config import Settings, settings as default_settings
from app.ors_core import (assign_groups, downlink_bandwidth, evaluate_estimated, evaluate_true, evaluate_true_noma,
                          ors_ratio)
from app.sca_optimizer import BlockParams, solve_block, write_trace
from app.schemas import CsiMode, DropResult, ResultRow, Scheme, SimConfig, SolveStatus

logger = logging.getLogger(__name__)

RESULT_HEADER = ["scheme", "csi", "N", "drops", "mean_Rnet_bps", "se_Rnet_bps",
                 "mean_obj_bps", "se_obj_bps", "infeasible_count"]


def child_seed(base_seed: int, N: int, drop_index: int) -> int:
    """64-bit seed of one drop, independent of scheme and of execution order."""
    return int(np.random.SeedSequence([base_seed, N, drop_index]).generate_state(1, dtype=np.uint64)[0])


def _overall_status(statuses: Sequence[SolveStatus]) -> SolveStatus:
    if SolveStatus.INFEASIBLE in statuses:
        return SolveStatus.INFEASIBLE
    if SolveStatus.ITERATION_CAP in statuses:
        return SolveStatus.ITERATION_CAP
    return SolveStatus.CONVERGED


def _run_scheme(config: SimConfig, scheme: Scheme, csi: CsiMode, N: int, drop_index: int, seed: int,
                channels, alpha: float, rng: np.random.Generator, solver: Optional[str],
                trace_dir: Optional[Path]) -> DropResult:
    mode = scheme.pilot_mode
    budget = pilot_budget(N, 2, mode)
    b_dl = downlink_bandwidth(config.B, budget.tau, config.T_coh)
    params = BlockParams(
        P_Tr=config.P_Tr,
        sigma_v2=config.sigma_v2,
        B_DL=b_dl,
        alpha_ors=alpha if scheme is Scheme.ORS else 0.0,
        kappa=config.kappa,
        epsilon=config.epsilon,
        rel_tol=config.rel_tol,
        max_iterations=config.max_iterations,
        solver=solver,
    )

    csis = []
    for block in channels:
        groups = assign_groups(block.t)
        if csi is CsiMode.PERFECT:
            csis.append(perfect_csi(block, budget, groups))
        else:
            csis.append(estimate(block, budget, groups, config.P_UL, config.sigma_z2, rng))

    if scheme is Scheme.ORS:
        first = solve_block(1, csis[0], params, rng=rng)
        second = solve_block(2, csis[1], params, carry_common=first.common_rate, rng=rng)
    else:
        first = solve_noma_block(1, csis[0], params, mode, rng=rng)
        second = solve_noma_block(2, csis[1], params, mode, rng=rng)
    solutions = [first, second]

    if trace_dir is not None:
        for solution in solutions:
            write_trace(solution.records, trace_dir / f"{scheme.value}_{csi.value}_N{N}_drop{drop_index}_t{solution.t}.csv")

    noma = scheme is not Scheme.ORS
    bandwidths, taus = [b_dl, b_dl], [budget.tau, budget.tau]
    if noma:
        actual = evaluate_true_noma(solutions, channels, config.sigma_v2, bandwidths, taus)
    else:
        actual = evaluate_true(solutions, channels, config.sigma_v2, bandwidths, taus)
    predicted = evaluate_estimated(solutions, csis, config.sigma_v2, bandwidths, taus, noma=noma)
    return DropResult(
        scheme=scheme,
        csi=csi,
        N=N,
        drop_index=drop_index,
        seed=seed,
        r_net=actual.r_net,
        xi_obj=predicted.r_net,
        r_p=actual.r_p,
        r_n=actual.r_n,
        r_c_candidate=actual.r_c_candidate,
        r_c=actual.r_c,
        b_dl=actual.b_dl,
        tau=actual.tau,
        iterations=[s.iterations for s in solutions],
        status=_overall_status([s.status for s in solutions]),
    )


def run_drop(config: SimConfig, N: int, drop_index: int, csi: Optional[CsiMode] = None,
             solver: Optional[str] = None, trace_dir: Optional[Union[str, Path]] = None) -> List[DropResult]:
    """
    Simulate one user drop for every configured scheme.

    All schemes share the drop's geometry and true channels; the seed streams
    are spawned in the fixed scheme order so a subset of schemes reproduces the
    same numbers as a full run.

    Args:
        config (SimConfig): Experiment configuration
        N (int): RIS element count
        drop_index (int): Index of the drop within the sweep
        csi (Optional[CsiMode]): Overrides ``config.csi``
        solver (Optional[str]): Conic backend, defaults to the runtime setting
        trace_dir (Optional[Union[str, Path]]): Directory for iteration traces

    Returns:
        List[DropResult]: One result per scheme in ``config.schemes`` order
    """
    csi = config.csi if csi is None else CsiMode(csi)
    solver = default_settings.solver if solver is None else solver
    trace_dir = None if trace_dir is None else Path(trace_dir)
    seed = child_seed(config.base_seed, N, drop_index)

    scenario_seq, channel_seq, *scheme_seqs = np.random.SeedSequence(seed).spawn(2 + len(Scheme))
    scenario = build_scenario(config, int(scenario_seq.generate_state(1)[0]), N=N)
    pathloss = config.pathloss
    channel_rng = np.random.default_rng(channel_seq)
    channels = [sample_channels(scenario, pathloss, t, channel_rng) for t in (1, 2)]
    alpha = ors_ratio(large_scale_fading(scenario, pathloss, 1), large_scale_fading(scenario, pathloss, 2),
                      alpha_max=config.alpha_max)

    results = []
    for scheme, seq in zip(Scheme, scheme_seqs):
        if scheme not in config.schemes:
            continue
        result = _run_scheme(config, scheme, csi, N, drop_index, seed, channels, alpha,
                             np.random.default_rng(seq), solver, trace_dir)
        logger.info("N=%d drop %d %s: R_net %.6g bit/s (%s)", N, drop_index, scheme.value,
                    result.r_net, result.status.value)
        results.append(result)
    return results


def _drop_task(args: Tuple[SimConfig, int, int, CsiMode, Optional[str], Optional[str]]) -> List[DropResult]:
    return run_drop(*args)


def _mean_se(values: List[float]) -> Tuple[float, float]:
    if not values:
        return float("nan"), float("nan")
    if len(values) == 1:
        return float(values[0]), 0.0
    data = np.asarray(values)
    return float(np.mean(data)), float(stats.sem(data))


def aggregate(results: Sequence[DropResult], drops: int) -> List[ResultRow]:
    """Mean and standard error per (scheme, csi, N) over the feasible drops, in input order."""
    groups: Dict[Tuple[Scheme, CsiMode, int], List[DropResult]] = {}
    for result in results:
        groups.setdefault((result.scheme, result.csi, result.N), []).append(result)

    rows = []
    for (scheme, csi, N), members in groups.items():
        members = sorted(members, key=lambda r: r.drop_index)
        feasible = [r for r in members if r.status is not SolveStatus.INFEASIBLE]
        mean_net, se_net = _mean_se([r.r_net for r in feasible])
        mean_obj, se_obj = _mean_se([r.xi_obj for r in feasible])
        rows.append(ResultRow(scheme=scheme, csi=csi, N=N, drops=drops, mean_Rnet_bps=mean_net,
                              se_Rnet_bps=se_net, mean_obj_bps=mean_obj, se_obj_bps=se_obj,
                              infeasible_count=len(members) - len(feasible)))
    return rows


def sweep(config: SimConfig, runtime: Optional[Settings] = None, csi: Optional[CsiMode] = None,
          trace_dir: Optional[Union[str, Path]] = None) -> Tuple[List[ResultRow], List[DropResult]]:
    """
    Run every drop for every N and aggregate per scheme.

    Args:
        config (SimConfig): Experiment configuration
        runtime (Optional[Settings]): Solver and worker settings, defaults to the process settings
        csi (Optional[CsiMode]): Overrides ``config.csi``
        trace_dir (Optional[Union[str, Path]]): Directory for iteration traces

    Returns:
        Tuple[List[ResultRow], List[DropResult]]: Aggregated rows and every drop result
    """
    runtime = default_settings if runtime is None else runtime
    csi = config.csi if csi is None else CsiMode(csi)
    trace = None if trace_dir is None else str(trace_dir)
    tasks = [(config, N, d, csi, runtime.solver, trace) for N in config.N_list for d in range(config.drops)]
    logger.info("Sweeping %d drops over N=%s (%s CSI, %d workers)", len(tasks), config.N_list,
                csi.value, runtime.max_workers)

    if runtime.max_workers > 1:
        with ProcessPoolExecutor(max_workers=runtime.max_workers) as pool:
            batches = list(pool.map(_drop_task, tasks))
    else:
        batches = [_drop_task(task) for task in tasks]

    results = [result for batch in batches for result in batch]
    return aggregate(results, config.drops), results


def write_results(rows: Sequence[ResultRow], out_path: Union[str, Path]) -> Path:
    """
    Write the result table as CSV sorted by (scheme, N).

    Raises:
        OSError: If the file cannot be written; the message names the path
    """
    out_path = Path(out_path)
    ordered = sorted(rows, key=lambda r: (r.scheme.value, r.N, r.csi.value))
    try:
        with out_path.open("w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(RESULT_HEADER)
            for row in ordered:
                writer.writerow([getattr(row, name) if name not in ("scheme", "csi") else getattr(row, name).value
                                 for name in RESULT_HEADER])
    except OSError as e:
        raise OSError(f"Cannot write results to {out_path}: {e}") from e
    return out_path


def write_plotdata(rows: Sequence[ResultRow], out_path: Union[str, Path]) -> Path:
    """One ``N<TAB>mean<TAB>se`` block per scheme, blocks separated by a blank line."""
    out_path = Path(out_path)
    blocks: Dict[Tuple[str, str], List[ResultRow]] = {}
    for row in sorted(rows, key=lambda r: (r.scheme.value, r.csi.value, r.N)):
        blocks.setdefault((row.scheme.value, row.csi.value), []).append(row)

    text = "\n".join(
        f"# {scheme} ({csi})\n" + "".join(f"{r.N}\t{r.mean_Rnet_bps!r}\t{r.se_Rnet_bps!r}\n" for r in members)
        for (scheme, csi), members in blocks.items()
    )
    try:
        out_path.write_text(text)
    except OSError as e:
        raise OSError(f"Cannot write plot data to {out_path}: {e}") from e
    return out_path


def paired_sign_test(first: Sequence[float], second: Sequence[float]) -> float:
    """
    One-sided sign test that ``first`` tends to exceed ``second`` on paired drops.

    Returns:
        float: p-value; ties are dropped and an all-tie sample gives 1.0
    """
    if len(first) != len(second):
        raise ValueError("Paired samples must have equal length")
    diff = np.asarray(first, dtype=float) - np.asarray(second, dtype=float)
    diff = diff[diff != 0]
    if diff.size == 0:
        return 1.0
    return float(stats.binomtest(int(np.sum(diff > 0)), int(diff.size), 0.5, alternative="greater").pvalue)


def rank_trend(N_values: Sequence[int], means: Sequence[float]) -> float:
    """Spearman rank correlation of a mean curve against N."""
    if len(N_values) < 2:
        raise ValueError("A trend needs at least two points")
    return float(stats.spearmanr(N_values, means).statistic)
