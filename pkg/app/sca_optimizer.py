"""Alternating SCA over beamformers and RIS phases for one coherence block.

Inside the conic subproblems channels are scaled by sqrt(P_Tr) / sigma_v so that the
noise power is 1 and the power budget is 1, and rates are in bit/s/Hz. Everything
crossing the module boundary is in watts and bit/s.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from app.channel_estimation import effective_estimate
from app.conic import (ConicProgram, ConicSolution, ConstraintKind, SolverFailure, SubproblemError, deinterleave,
                       inner_product_matrix, interleave, linear_map_matrix)
from app.models import (BeamformerSet, BlockSolution, EstimatedCsi, IterationRecord, PhaseConfig,
                        SlackState)
from app.schemas import SolveStatus

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)
# links whose expansion SINR falls below this are switched off for the subproblem
INACTIVE_SINR = 1e-7
# expansion slacks are kept within [EXPANSION_FLOOR * sinr, sinr]
EXPANSION_FLOOR = 0.5
# switched-off streams restart from this share of the budget on a maximum-ratio beam
RESEED_POWER = 1e-2
# weight of the carried-rate shortfall while block 2 restores the common rate
CARRY_PENALTY = 100.0
CARRY_MARGIN = 1e-6
TRACE_HEADER = "iter,phase,objective,power_used,max_constraint_violation"


class StreamLink(BaseModel):
    """One SINR slack: ``signal`` decoded at the ``receiver`` role under ``interference``."""

    model_config = ConfigDict(frozen=True)

    name: str
    receiver: str
    signal: str
    interference: Tuple[str, ...] = ()


class SchemeLayout(BaseModel):
    """Streams, SINR links and rate slacks of a transmission scheme."""

    model_config = ConfigDict(frozen=True)

    name: str
    targets: Dict[str, str]
    links: Tuple[StreamLink, ...]
    rates: Dict[str, Tuple[str, ...]]
    common: bool = False

    @property
    def streams(self) -> List[str]:
        return list(self.targets)

    def weights(self, t: int) -> Dict[str, float]:
        weights = {name: 1.0 for name in self.rates}
        if self.common:
            weights["c"] = 0.5 if t == 1 else 0.0
        return weights


ORS_LAYOUT = SchemeLayout(
    name="ors",
    targets={"P": "P", "N": "N", "c": "P"},
    links=(
        StreamLink(name="P", receiver="P", signal="P", interference=("N",)),
        StreamLink(name="c", receiver="P", signal="c", interference=("P", "N")),
        StreamLink(name="N", receiver="N", signal="N", interference=("P",)),
    ),
    rates={"P": ("P",), "c": ("c",), "N": ("N",)},
    common=True,
)


class BlockParams(BaseModel):
    P_Tr: float
    sigma_v2: float
    B_DL: float
    alpha_ors: float = 0.0
    kappa: float = 1e4
    epsilon: float = 1.0
    rel_tol: float = 1e-5
    max_iterations: int = 50
    solver: Optional[str] = None

    @field_validator("P_Tr", "sigma_v2", "B_DL")
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError("Power, noise and bandwidth must be positive")
        return v

    @field_validator("alpha_ors")
    @classmethod
    def validate_alpha(cls, v):
        if v < 0:
            raise ValueError("ORS ratio cannot be negative")
        return v

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.P_Tr / self.sigma_v2))


class AffineBound(BaseModel):
    """f(z, beta) = offset + Re{direction^H z} + beta_coef * beta."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    offset: float
    direction: np.ndarray
    beta_coef: float

    def __call__(self, z: np.ndarray, beta: float) -> float:
        return float(self.offset + np.vdot(self.direction, z).real + self.beta_coef * beta)

    def expression(self, z: cp.Expression, beta: cp.Expression) -> cp.Expression:
        return self.offset + interleave(self.direction) @ z + self.beta_coef * beta


def taylor_signal_bound(h_eff: np.ndarray, w_tilde: np.ndarray, beta_tilde: float) -> AffineBound:
    """
    First-order lower bound of |h^H w|^2 / beta around (w_tilde, beta_tilde).

    f(w, beta) = 2 Re{w~^H h h^H w} / beta~ - |h^H w~|^2 beta / beta~^2, tight at the
    expansion point and below |h^H w|^2 / beta for every beta > 0.

    Raises:
        ValueError: If beta_tilde is not positive
    """
    if beta_tilde <= 0:
        raise ValueError("Expansion SINR must be positive")
    a = np.vdot(h_eff, w_tilde)
    return AffineBound(offset=0.0, direction=2 * a * h_eff / beta_tilde,
                       beta_coef=-float(abs(a) ** 2) / beta_tilde ** 2)


def taylor_phase_bound(c: complex, d: np.ndarray, theta_tilde: np.ndarray, beta_tilde: float) -> AffineBound:
    """Same bound for |c + d theta|^2 / beta, affine in (theta, beta)."""
    if beta_tilde <= 0:
        raise ValueError("Expansion SINR must be positive")
    v = c + d @ theta_tilde
    return AffineBound(offset=2 * float((np.conj(v) * c).real) / beta_tilde,
                       direction=2 * v * np.conj(d) / beta_tilde,
                       beta_coef=-float(abs(v) ** 2) / beta_tilde ** 2)


def project_unit_modulus(theta: Union[PhaseConfig, np.ndarray]) -> Union[PhaseConfig, np.ndarray]:
    """
    Map every phase-shift entry onto the unit circle.

    Zero entries carry no phase and are replaced by 1.
    """
    values = theta.theta if isinstance(theta, PhaseConfig) else np.asarray(theta, dtype=complex)
    modulus = np.abs(values)
    zero = modulus < 1e-12
    if np.any(zero):
        logger.warning("Replacing %d zero phase-shift entries by 1", int(np.sum(zero)))
    projected = np.where(zero, 1.0 + 0j, values / np.where(zero, 1.0, modulus))
    return PhaseConfig(theta=projected) if isinstance(theta, PhaseConfig) else projected


@dataclass
class _Point:
    """Normalised SCA iterate: beams (unit power budget), phases, SINR and rate slacks."""

    w: Dict[str, np.ndarray]
    theta: np.ndarray
    beta: Dict[str, float]
    xi: Dict[str, float]


class InitialPoint(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: BeamformerSet
    theta: PhaseConfig
    beta: Dict[str, float]
    xi: Dict[str, float]


def _role_users(csi: EstimatedCsi) -> Dict[str, int]:
    return {"P": csi.user_p, "N": csi.user_n}


def _effective_channels(csi: EstimatedCsi, theta: np.ndarray, scale: float = 1.0) -> Dict[str, np.ndarray]:
    return {role: scale * effective_estimate(csi, theta, k) for role, k in _role_users(csi).items()}


def _link_sinrs(layout: SchemeLayout, channels: Dict[str, np.ndarray], w: Dict[str, np.ndarray],
                noise: float) -> Dict[str, float]:
    sinrs = {}
    for link in layout.links:
        g = channels[link.receiver]
        signal = float(np.abs(np.vdot(g, w[link.signal])) ** 2)
        interference = sum(float(np.abs(np.vdot(g, w[s])) ** 2) for s in link.interference)
        sinrs[link.name] = signal / (interference + noise)
    return sinrs


def _rates(layout: SchemeLayout, beta: Dict[str, float]) -> Dict[str, float]:
    """Rate slacks in bit/s/Hz at the given SINRs."""
    return {r: min(float(np.log2(1.0 + beta[l])) for l in links) for r, links in layout.rates.items()}


def _objective(layout: SchemeLayout, t: int, xi: Dict[str, float]) -> float:
    return sum(weight * xi[r] for r, weight in layout.weights(t).items())


def _beamformer_set(t: int, w: Dict[str, np.ndarray], L: int, amplitude: float = 1.0) -> BeamformerSet:
    zero = np.zeros(L, dtype=complex)
    return BeamformerSet(t=t, **{f"w_{s}": amplitude * w.get(s, zero) for s in ("P", "N", "c")})


def _power(w: Dict[str, np.ndarray]) -> float:
    return float(sum(np.vdot(v, v).real for v in w.values()))


def _carry_norm(layout: SchemeLayout, t: int, carry_common: Optional[float], params: BlockParams) -> Optional[float]:
    if not layout.common or t != 2:
        return None
    if carry_common is None:
        raise ValueError("Block 2 needs the common rate carried over from block 1")
    return max(carry_common, 0.0) / params.B_DL


def _expansion_betas(layout: SchemeLayout, beta: Dict[str, float], sinrs: Dict[str, float]) -> Dict[str, float]:
    # any value in [beta, sinr] keeps both the expansion point and the previous slacks feasible
    return {l.name: min(max(beta.get(l.name, sinrs[l.name]), EXPANSION_FLOOR * sinrs[l.name]), sinrs[l.name])
            for l in layout.links}


def _reseed_silent_beams(layout: SchemeLayout, channels: Dict[str, np.ndarray], point: _Point,
                         weights: Dict[str, float], carry: Optional[float]) -> _Point:
    """
    Give weighted streams whose links would be switched off a small maximum-ratio beam.

    A switched-off link keeps beta = 0 and a zero beam has a zero Taylor gradient, so
    the stream could never come back. The reseeded point is dropped when it would no
    longer carry ``carry``.
    """
    expansion = _expansion_betas(layout, point.beta, _link_sinrs(layout, channels, point.w, 1.0))
    off = {l.signal for l in layout.links if expansion[l.name] < INACTIVE_SINR}
    silent = [s for s in layout.streams
              if s in off and weights.get(s, 0.0) > 0
              and np.linalg.norm(channels[layout.targets[s]]) > 1e-300]
    if not silent:
        return point
    w = dict(point.w)
    for s in silent:
        g = channels[layout.targets[s]]
        w[s] = np.sqrt(RESEED_POWER) * g / np.linalg.norm(g)
    total = _power(w)
    if total > 1.0:
        w = {s: v / np.sqrt(total) for s, v in w.items()}
    sinrs = _link_sinrs(layout, channels, w, 1.0)
    if carry is not None and layout.common and np.log2(1.0 + sinrs["c"]) < carry:
        return point
    logger.debug("Reseeding silent beams %s", silent)
    return _Point(w=w, theta=point.theta, beta=sinrs, xi=_rates(layout, sinrs))


def _add_rate_structure(program: ConicProgram, layout: SchemeLayout, t: int, params: BlockParams,
                        carry: Optional[float], beta: cp.Variable, xi: cp.Variable,
                        weights: Optional[Dict[str, float]] = None,
                        carry_penalty: Optional[float] = None) -> cp.Expression:
    link_index = {l.name: i for i, l in enumerate(layout.links)}
    rate_index = {r: i for i, r in enumerate(layout.rates)}
    program.add("beta_nonneg", ConstraintKind.AFFINE, beta >= 0)
    program.add("xi_nonneg", ConstraintKind.AFFINE, xi >= 0)
    for r, links in layout.rates.items():
        for l in links:
            program.add(f"rate_{r}_{l}", ConstraintKind.LOG,
                        xi[rate_index[r]] <= cp.log(1 + beta[link_index[l]]) / LN2)
    if layout.common and t == 1:
        program.add("ors_ratio", ConstraintKind.AFFINE,
                    params.alpha_ors * xi[rate_index["P"]] - xi[rate_index["c"]] <= 0)
    weights = layout.weights(t) if weights is None else weights
    objective = sum(weight * xi[rate_index[r]] for r, weight in weights.items())
    if layout.common and t == 2 and carry is not None:
        if carry_penalty is None:
            program.add("carry_common", ConstraintKind.AFFINE, carry - xi[rate_index["c"]] <= 0)
        else:
            gap = program.variable("carry_gap", 1)
            program.add("carry_gap_nonneg", ConstraintKind.AFFINE, gap >= 0)
            program.add("carry_common", ConstraintKind.AFFINE, carry - xi[rate_index["c"]] - gap[0] <= 0)
            objective = objective - carry_penalty * gap[0]
    return objective


def _beamforming_program(csi: EstimatedCsi, theta: np.ndarray, w_tilde: Dict[str, np.ndarray],
                         beta_tilde: Dict[str, float], t: int, params: BlockParams, carry: Optional[float],
                         layout: SchemeLayout, weights: Optional[Dict[str, float]] = None,
                         carry_penalty: Optional[float] = None) -> ConicProgram:
    channels = _effective_channels(csi, theta, params.scale)
    sinrs = _link_sinrs(layout, channels, w_tilde, 1.0)
    beta_tilde = _expansion_betas(layout, beta_tilde, sinrs)

    program = ConicProgram(f"beamforming(t={t})")
    w = {s: program.variable(f"w_{s}", 2 * csi.L) for s in layout.streams}
    beta = program.variable("beta", len(layout.links))
    xi = program.variable("xi", len(layout.rates))

    program.add("power", ConstraintKind.SOC, cp.sum_squares(cp.hstack(list(w.values()))) <= 1)
    for i, link in enumerate(layout.links):
        if beta_tilde[link.name] < INACTIVE_SINR:
            program.add(f"sinr_{link.name}_off", ConstraintKind.AFFINE, beta[i] <= 0)
            continue
        g = channels[link.receiver]
        A = inner_product_matrix(g)
        bound = taylor_signal_bound(g, w_tilde[link.signal], beta_tilde[link.name])
        interference = sum((cp.sum_squares(A @ w[s]) for s in link.interference), 0)
        # rows scaled by the interference-plus-noise at the expansion point
        norm = 1.0 + sum(float(np.abs(np.vdot(g, w_tilde[s])) ** 2) for s in link.interference)
        program.add(f"sinr_{link.name}", ConstraintKind.SOC,
                    (interference + 1 - bound.expression(w[link.signal], beta[i])) / norm <= 0)
    program.maximize(_add_rate_structure(program, layout, t, params, carry, beta, xi, weights, carry_penalty))
    return program


def _phase_program(csi: EstimatedCsi, w_fixed: Dict[str, np.ndarray], theta_tilde: np.ndarray,
                   beta_tilde: Dict[str, float], prev_theta: np.ndarray, t: int, params: BlockParams,
                   carry: Optional[float], layout: SchemeLayout,
                   weights: Optional[Dict[str, float]] = None,
                   carry_penalty: Optional[float] = None) -> ConicProgram:
    scale = params.scale
    users = _role_users(csi)
    N = theta_tilde.shape[0]
    sinrs = _link_sinrs(layout, _effective_channels(csi, theta_tilde, scale), w_fixed, 1.0)
    beta_tilde = _expansion_betas(layout, beta_tilde, sinrs)

    def terms(role: str, stream: str) -> Tuple[complex, np.ndarray]:
        # w^H (h + H theta) = c + d theta
        k = users[role]
        w_s = w_fixed[stream]
        H_k = csi.H_hat[k]
        d = np.zeros(N, dtype=complex) if H_k is None else scale * (w_s.conj() @ H_k)
        return complex(scale * np.vdot(w_s, csi.h_hat[k])), d

    program = ConicProgram(f"phase(t={t})")
    x = program.variable("theta", 2 * N)
    beta = program.variable("beta", len(layout.links))
    xi = program.variable("xi", len(layout.rates))
    penalty = program.variable("penalty", 1)

    program.add("modulus", ConstraintKind.SOC, cp.norm(cp.vstack([x[0::2], x[1::2]]), 2, axis=0) <= 1)
    for i, link in enumerate(layout.links):
        if beta_tilde[link.name] < INACTIVE_SINR:
            program.add(f"sinr_{link.name}_off", ConstraintKind.AFFINE, beta[i] <= 0)
            continue
        c, d = terms(link.receiver, link.signal)
        bound = taylor_phase_bound(c, d, theta_tilde, beta_tilde[link.name])
        interference, norm = 0, 1.0
        for s in link.interference:
            c_i, d_i = terms(link.receiver, s)
            interference = interference + cp.sum_squares(np.array([c_i.real, c_i.imag]) + linear_map_matrix(d_i) @ x)
            norm += float(abs(c_i + d_i @ theta_tilde) ** 2)
        program.add(f"sinr_{link.name}", ConstraintKind.SOC,
                    (interference + 1 - bound.expression(x, beta[i])) / norm <= 0)

    # |sum_j conj(theta_prev_j) (theta_j - theta_prev_j)| <= penalty
    drift = inner_product_matrix(prev_theta) @ x - np.array([np.vdot(prev_theta, prev_theta).real, 0.0])
    program.add("penalty", ConstraintKind.SOC, cp.norm(drift, 2) <= penalty[0])
    objective = _add_rate_structure(program, layout, t, params, carry, beta, xi, weights, carry_penalty)
    program.maximize(objective - 2 * params.kappa / params.B_DL * penalty[0])
    return program


def build_beamforming_subproblem(csi: EstimatedCsi, theta_fixed: Union[PhaseConfig, np.ndarray],
                                 w_tilde: BeamformerSet, beta_tilde: Dict[str, float], t: int,
                                 params: BlockParams, carry_common: Optional[float] = None,
                                 layout: SchemeLayout = ORS_LAYOUT) -> ConicProgram:
    """
    Beamforming subproblem with the RIS phases fixed.

    Args:
        csi (EstimatedCsi): Estimated channels (missing cascaded part for G^N)
        theta_fixed (Union[PhaseConfig, np.ndarray]): Phase vector held fixed
        w_tilde (BeamformerSet): Expansion beamformers in watts^(1/2)
        beta_tilde (Dict[str, float]): Expansion SINR slacks per link
        t (int): Block index
        params (BlockParams): Power, noise, bandwidth, ORS ratio
        carry_common (Optional[float]): Block-1 common rate in bit/s, required for t=2
        layout (SchemeLayout): Streams and links of the scheme

    Returns:
        ConicProgram: Maximise the weighted rate slacks in bit/s/Hz
    """
    theta = theta_fixed.theta if isinstance(theta_fixed, PhaseConfig) else np.asarray(theta_fixed)
    carry = _carry_norm(layout, t, carry_common, params)
    w = {s: w_tilde.stream(s) / np.sqrt(params.P_Tr) for s in layout.streams}
    return _beamforming_program(csi, theta, w, beta_tilde, t, params, carry, layout)


def build_phase_subproblem(csi: EstimatedCsi, w_fixed: BeamformerSet, theta_tilde: Union[PhaseConfig, np.ndarray],
                           beta_tilde: Dict[str, float], t: int, params: BlockParams,
                           prev_theta: Optional[np.ndarray] = None, carry_common: Optional[float] = None,
                           layout: SchemeLayout = ORS_LAYOUT) -> ConicProgram:
    """
    Phase-shift subproblem with the beamformers fixed.

    Unit modulus is relaxed to |theta_n| <= 1 and the drift from the previous
    iterate is penalised with weight 2 kappa as |sum_n conj(prev_n) (theta_n - prev_n)|.
    The conjugate is intentional: the term is prev^H (theta - prev), the drift along the
    previous phases. The unconjugated prev^T (theta - prev) mixes phases and is not that drift.

    Raises:
        ValueError: If kappa is not positive
    """
    if params.kappa <= 0:
        raise ValueError("Penalty weight kappa must be positive")
    theta = theta_tilde.theta if isinstance(theta_tilde, PhaseConfig) else np.asarray(theta_tilde)
    prev = theta if prev_theta is None else np.asarray(prev_theta)
    carry = _carry_norm(layout, t, carry_common, params)
    w = {s: w_fixed.stream(s) / np.sqrt(params.P_Tr) for s in layout.streams}
    return _phase_program(csi, w, theta, beta_tilde, prev, t, params, carry, layout)


def init_point(csi: EstimatedCsi, params: BlockParams, rng: np.random.Generator,
               layout: SchemeLayout = ORS_LAYOUT) -> InitialPoint:
    """
    Random phases and maximum-ratio beams with equal power per stream.

    Args:
        csi (EstimatedCsi): Estimated channels of the block
        params (BlockParams): Power budget, noise and bandwidth
        rng (np.random.Generator): Source of the random phases
        layout (SchemeLayout): Streams of the scheme

    Returns:
        InitialPoint: Beams using the full power budget, SINRs and rates (bit/s) they achieve
    """
    theta = np.exp(2j * np.pi * rng.uniform(size=csi.N))
    channels = _effective_channels(csi, theta)
    per_stream = params.P_Tr / len(layout.streams)
    w = {}
    for stream, role in layout.targets.items():
        g = channels[role]
        norm = np.linalg.norm(g)
        if norm < 1e-300:
            logger.warning("Zero estimated channel for stream %s, using a uniform beam", stream)
            g, norm = np.ones(csi.L, dtype=complex), np.sqrt(csi.L)
        w[stream] = np.sqrt(per_stream) * g / norm

    beta = _link_sinrs(layout, channels, w, params.sigma_v2)
    xi = {r: params.B_DL * v for r, v in _rates(layout, beta).items()}
    if layout.common and params.alpha_ors * xi["P"] > xi["c"]:
        xi["P"] = xi["c"] / params.alpha_ors
    return InitialPoint(w=_beamformer_set(csi.t, w, csi.L), theta=PhaseConfig(theta=theta), beta=beta, xi=xi)


def _read_point(layout: SchemeLayout, solution: ConicSolution, w: Dict[str, np.ndarray],
                theta: np.ndarray) -> _Point:
    beta = {l.name: max(float(v), 0.0) for l, v in zip(layout.links, solution.values["beta"])}
    xi = {r: max(float(v), 0.0) for r, v in zip(layout.rates, solution.values["xi"])}
    return _Point(w=w, theta=theta, beta=beta, xi=xi)


class _BlockRun:
    """State of one SCA run: iterate, trace and records."""

    def __init__(self, t: int, csi: EstimatedCsi, params: BlockParams, carry: Optional[float],
                 layout: SchemeLayout):
        self.t = t
        self.csi = csi
        self.params = params
        self.carry = carry
        self.layout = layout
        self.records: List[IterationRecord] = []

    def record(self, i: int, phase: str, objective: float, w: Dict[str, np.ndarray], violation: float) -> None:
        entry = IterationRecord(iter=i, phase=phase, objective=objective * self.params.B_DL,
                                power_used=_power(w) * self.params.P_Tr, max_constraint_violation=violation)
        self.records.append(entry)
        logger.debug("t=%d iter %d %s objective %.6g bit/s", self.t, i, phase, entry.objective)

    def step(self, point: _Point, i: int, weights: Optional[Dict[str, float]] = None,
             carry: Optional[float] = None, tag: Optional[str] = None,
             carry_penalty: Optional[float] = None) -> _Point:
        """One P2 + P3 round; returns the new normalised iterate."""
        solver = self.params.solver
        channels = _effective_channels(self.csi, point.theta, self.params.scale)
        point = _reseed_silent_beams(self.layout, channels, point,
                                     self.layout.weights(self.t) if weights is None else weights,
                                     carry if carry_penalty is None else None)
        program = _beamforming_program(self.csi, point.theta, point.w, point.beta, self.t, self.params,
                                       carry, self.layout, weights, carry_penalty)
        solution = program.solve(solver)
        w = {s: deinterleave(solution.values[f"w_{s}"]) for s in self.layout.streams}
        point = _read_point(self.layout, solution, w, point.theta)
        self.record(i, tag or "beamforming", self._weighted(point, weights), w, solution.max_violation)

        if self.csi.N == 0:
            return point
        program = _phase_program(self.csi, point.w, point.theta, point.beta, point.theta, self.t, self.params,
                                 carry, self.layout, weights, carry_penalty)
        solution = program.solve(solver)
        theta = deinterleave(solution.values["theta"])
        point = _read_point(self.layout, solution, point.w, theta)
        self.record(i, tag or "phase", self._weighted(point, weights), point.w, solution.max_violation)
        return point

    def _weighted(self, point: _Point, weights: Optional[Dict[str, float]]) -> float:
        weights = self.layout.weights(self.t) if weights is None else weights
        return sum(weight * point.xi[r] for r, weight in weights.items())

    def restore_common(self, point: _Point) -> _Point:
        """
        Phase-one SCA for block 2: the block objective minus a penalty on the shortfall
        below the carried common rate, iterated until the shortfall closes.

        Raises:
            SubproblemError: If the rate is still short after ``max_iterations`` rounds
        """
        target = self.carry + CARRY_MARGIN
        for i in range(1, self.params.max_iterations + 1):
            point = self.step(point, i, carry=target, tag="restore", carry_penalty=CARRY_PENALTY)
            point.xi = _rates(self.layout, point.beta)
            if point.xi["c"] >= self.carry:
                return point
        raise SubproblemError(f"common rate {self.carry * self.params.B_DL:.6g} bit/s cannot be carried")

    def run(self, start: _Point) -> Tuple[_Point, List[float], int, SolveStatus]:
        point = start
        if self.carry is not None and point.xi["c"] < self.carry:
            point = self.restore_common(point)
        trace = [self._weighted(point, None) * self.params.B_DL]
        self.record(0, "init", trace[0] / self.params.B_DL, point.w, 0.0)

        status = SolveStatus.ITERATION_CAP
        iterations = 0
        for i in range(1, self.params.max_iterations + 1):
            try:
                candidate = self.step(point, i, carry=self.carry)
            except SolverFailure as e:
                logger.warning("Block %d: numerical failure at iteration %d (%s), keeping iterate %d",
                               self.t, i, e, i - 1)
                status = SolveStatus.CONVERGED
                break
            except SubproblemError:
                if i == 1:
                    raise
                logger.warning("Block %d: subproblem failed at iteration %d, keeping iterate %d", self.t, i, i - 1)
                status = SolveStatus.CONVERGED
                break
            objective = self._weighted(candidate, None) * self.params.B_DL
            if objective < trace[-1] - 1e-6 * max(1.0, abs(trace[-1])):
                logger.debug("Block %d: iteration %d lowered the objective, stopping", self.t, i)
                status = SolveStatus.CONVERGED
                break
            point = candidate
            trace.append(objective)
            iterations = i
            if trace[-1] - trace[-2] < max(self.params.epsilon, self.params.rel_tol * abs(trace[-1])):
                status = SolveStatus.CONVERGED
                break
        return point, trace, iterations, status

    def polish(self, point: _Point) -> _Point:
        """Beamformers re-optimised once at the projected phases, recorded after the last iteration."""
        theta = project_unit_modulus(point.theta)
        try:
            program = _beamforming_program(self.csi, theta, point.w, point.beta, self.t, self.params,
                                           self.carry, self.layout)
            solution = program.solve(self.params.solver)
            w = {s: deinterleave(solution.values[f"w_{s}"]) for s in self.layout.streams}
            polished = _read_point(self.layout, solution, w, theta)
            self.record(self.records[-1].iter + 1, "final", self._weighted(polished, None), w, solution.max_violation)
            return polished
        except SubproblemError as e:
            logger.warning("Block %d: polish at projected phases failed (%s)", self.t, e)
            sinrs = _link_sinrs(self.layout, _effective_channels(self.csi, theta, self.params.scale), point.w, 1.0)
            return _Point(w=point.w, theta=theta, beta=sinrs, xi=_rates(self.layout, sinrs))


def _to_solution(t: int, point: _Point, csi: EstimatedCsi, params: BlockParams, trace: List[float],
                 iterations: int, status: SolveStatus, records: List[IterationRecord]) -> BlockSolution:
    return BlockSolution(
        t=t,
        w_star=_beamformer_set(t, point.w, csi.L, np.sqrt(params.P_Tr)),
        theta_star=PhaseConfig(theta=point.theta),
        slack_star=SlackState(xi={r: v * params.B_DL for r, v in point.xi.items()}, beta=dict(point.beta)),
        objective_trace=trace,
        iterations=iterations,
        status=status,
        records=records,
    )


def solve_block(t: int, csi: EstimatedCsi, params: BlockParams, carry_common: Optional[float] = None,
                rng: Optional[np.random.Generator] = None, layout: SchemeLayout = ORS_LAYOUT) -> BlockSolution:
    """
    Alternate beamforming and phase subproblems until the objective stalls.

    Args:
        t (int): Block index
        csi (EstimatedCsi): Estimated channels of the block
        params (BlockParams): Optimizer parameters
        carry_common (Optional[float]): Block-1 common rate in bit/s, required for t=2
        rng (Optional[np.random.Generator]): Source of the random initial phases
        layout (SchemeLayout): Streams and links of the scheme

    Returns:
        BlockSolution: Beams, unit-modulus phases, slacks in bit/s, monotone objective trace
    """
    if csi.t != t:
        raise ValueError(f"CSI belongs to block {csi.t}, not {t}")
    carry = _carry_norm(layout, t, carry_common, params)
    rng = np.random.default_rng() if rng is None else rng

    start = None
    for attempt in (1, 2):
        start = init_point(csi, params, rng, layout)
        w0 = {s: start.w.stream(s) / np.sqrt(params.P_Tr) for s in layout.streams}
        point = _Point(w=w0, theta=start.theta.theta, beta=dict(start.beta),
                       xi={r: v / params.B_DL for r, v in start.xi.items()})
        block = _BlockRun(t, csi, params, carry, layout)
        try:
            point, trace, iterations, status = block.run(point)
        except SubproblemError as e:
            logger.warning("Block %d attempt %d infeasible: %s", t, attempt, e)
            continue
        point = block.polish(point)
        logger.info("Block %d %s: %s after %d iterations, objective %.6g bit/s",
                    t, layout.name, status.value, iterations, trace[-1])
        return _to_solution(t, point, csi, params, trace, iterations, status, block.records)

    point = _Point(w={s: start.w.stream(s) / np.sqrt(params.P_Tr) for s in layout.streams},
                   theta=project_unit_modulus(start.theta.theta), beta=dict(start.beta),
                   xi={r: v / params.B_DL for r, v in start.xi.items()})
    return _to_solution(t, point, csi, params, [_objective(layout, t, point.xi) * params.B_DL], 0,
                        SolveStatus.INFEASIBLE, [])


def write_trace(records: Sequence[IterationRecord], path: Union[str, Path]) -> Path:
    """Write iteration records as comma-separated lines under a header."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join([TRACE_HEADER] + [r.as_line() for r in records]) + "\n")
    except OSError as e:
        raise OSError(f"Cannot write iteration trace to {path}: {e}") from e
    return path
