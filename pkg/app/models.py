from typing import Dict, FrozenSet, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas import PilotMode, SolveStatus


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class ChannelSet(_ArrayModel):
    """True channels of one coherence block, keyed by user id (1, 2)."""

    t: int
    h: Dict[int, np.ndarray]
    U: np.ndarray
    q: Dict[int, np.ndarray]
    H: Dict[int, np.ndarray]

    @model_validator(mode="after")
    def check_cascade(self):
        if self.t not in (1, 2):
            raise ValueError("Block index must be 1 or 2")
        for k, H_k in self.H.items():
            if not np.array_equal(H_k, self.U * self.q[k][np.newaxis, :]):
                raise ValueError(f"Cascaded channel of user {k} is not U diag(q)")
            if not (np.all(np.isfinite(H_k)) and np.all(np.isfinite(self.h[k]))):
                raise ValueError(f"Channels of user {k} contain non-finite entries")
        return self

    @property
    def users(self) -> List[int]:
        return sorted(self.h)

    def effective(self, k: int, theta: np.ndarray) -> np.ndarray:
        """h_k + H_k theta, the full effective channel of user k."""
        return self.h[k] + self.H[k] @ theta


class EstimatedCsi(_ArrayModel):
    """Channel knowledge available to the BS in one block; H_hat is None where unknown."""

    t: int
    h_hat: Dict[int, np.ndarray]
    H_hat: Dict[int, Optional[np.ndarray]]
    group_known: FrozenSet[int]
    group_unknown: FrozenSet[int]
    mode: PilotMode
    tau_used: int
    sigma_z2: float = 0.0
    P_UL: float = 1.0

    @model_validator(mode="after")
    def check_groups(self):
        if len(self.group_known) != 1 or len(self.group_unknown) != 1:
            raise ValueError("Each group holds exactly one user")
        if self.group_known & self.group_unknown:
            raise ValueError("A user cannot be in both groups")
        if self.mode is PilotMode.HALF:
            for k, H_k in self.H_hat.items():
                if (H_k is not None) != (k in self.group_known):
                    raise ValueError(f"Cascaded estimate of user {k} contradicts its group")
        elif any(H_k is None for H_k in self.H_hat.values()):
            raise ValueError("Full pilot budget estimates every cascaded channel")
        return self

    @property
    def user_p(self) -> int:
        return next(iter(self.group_known))

    @property
    def user_n(self) -> int:
        return next(iter(self.group_unknown))

    @property
    def L(self) -> int:
        return self.h_hat[self.user_p].shape[0]

    @property
    def N(self) -> int:
        H_p = self.H_hat[self.user_p]
        return 0 if H_p is None else H_p.shape[1]


class BeamformerSet(_ArrayModel):
    """Private beams for the G^P and G^N users plus the common beam of block t."""

    t: int
    w_P: np.ndarray
    w_N: np.ndarray
    w_c: np.ndarray

    @property
    def total_power(self) -> float:
        return float(sum(np.vdot(w, w).real for w in (self.w_P, self.w_N, self.w_c)))

    def stream(self, name: str) -> np.ndarray:
        return {"P": self.w_P, "N": self.w_N, "c": self.w_c}[name]


class PhaseConfig(_ArrayModel):
    theta: np.ndarray

    @property
    def N(self) -> int:
        return self.theta.shape[0]

    def max_modulus_error(self) -> float:
        if self.N == 0:
            return 0.0
        return float(np.max(np.abs(np.abs(self.theta) - 1.0)))


class SinrTriple(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma_P: float
    gamma_c: float
    gamma_N: float

    @field_validator("gamma_P", "gamma_c", "gamma_N")
    @classmethod
    def validate_sinr(cls, v):
        if v < 0 or not np.isfinite(v):
            raise ValueError("SINR must be finite and non-negative")
        return v


class NomaSinrs(BaseModel):
    """SIC decoding SINRs: gamma_PN is the G^P user decoding the G^N user's stream."""

    model_config = ConfigDict(frozen=True)

    gamma_P: float
    gamma_PN: float
    gamma_N: float


class RateReport(BaseModel):
    """Per-block rates (index 0 is block 1) and the combined net rate, all in bit/s."""

    model_config = ConfigDict(frozen=True)

    r_p: List[float]
    r_n: List[float]
    r_c_candidate: List[float]
    r_c: float
    r_net: float
    b_dl: List[float]
    tau: List[int]


class SlackState(BaseModel):
    """SCA slacks: rates xi in bit/s and SINRs beta (linear), keyed by stream."""

    model_config = ConfigDict(frozen=True)

    xi: Dict[str, float]
    beta: Dict[str, float]

    @field_validator("xi", "beta")
    @classmethod
    def validate_nonnegative(cls, v):
        # solver round-off may leave tiny negative values
        return {key: max(value, 0.0) for key, value in v.items()}


class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    iter: int
    phase: str
    objective: float
    power_used: float
    max_constraint_violation: float

    def as_line(self) -> str:
        return f"{self.iter},{self.phase},{self.objective!r},{self.power_used!r},{self.max_constraint_violation!r}"


class BlockSolution(_ArrayModel):
    t: int
    w_star: BeamformerSet
    theta_star: PhaseConfig
    slack_star: SlackState
    objective_trace: List[float]
    iterations: int
    status: SolveStatus
    records: List[IterationRecord] = Field(default_factory=list)

    @property
    def common_rate(self) -> float:
        return self.slack_star.xi.get("c", 0.0)


class NomaSolution(BlockSolution):
    @model_validator(mode="after")
    def check_no_common(self):
        if np.any(self.w_star.w_c != 0):
            raise ValueError("NOMA transmits no common stream")
        return self
