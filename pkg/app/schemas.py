from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


Position = Tuple[float, float, float]


def dbm_to_watts(value_dbm: float) -> float:
    """Convert a power level in dBm to watts."""
    return 10 ** ((value_dbm - 30) / 10)


def db_to_linear(value_db: float) -> float:
    return 10 ** (value_db / 10)


class PilotMode(str, Enum):
    FULL = "Full"
    HALF = "Half"


class CsiMode(str, Enum):
    PERFECT = "perfect"
    IMPERFECT = "imperfect"


class Scheme(str, Enum):
    ORS = "ors"
    NOMA_FULL = "noma_full"
    NOMA_HALF = "noma_half"

    @property
    def pilot_mode(self) -> PilotMode:
        return PilotMode.FULL if self is Scheme.NOMA_FULL else PilotMode.HALF


class SolveStatus(str, Enum):
    CONVERGED = "Converged"
    ITERATION_CAP = "IterationCap"
    INFEASIBLE = "Infeasible"


class PilotBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: PilotMode
    tau: int
    N: int
    K: int

    @staticmethod
    def symbols(mode: PilotMode, N: int, K: int) -> int:
        """
        Number of uplink pilot symbols for one coherence block.

        Args:
            mode (PilotMode): Full estimates every cascaded channel, Half only one user's
            N (int): RIS element count
            K (int): User count

        Returns:
            int: (N+1)K for Full, (N/2+1)K for Half
        """
        if mode is PilotMode.FULL:
            return (N + 1) * K
        return (N // 2 + 1) * K

    @model_validator(mode="after")
    def check_tau(self):
        if self.mode is PilotMode.HALF and self.N % 2 != 0:
            raise ValueError("Half pilot budget requires an even number of RIS elements")
        if self.tau != PilotBudget.symbols(self.mode, self.N, self.K):
            raise ValueError("tau does not match the pilot budget of the mode")
        return self


class PathlossParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    reference_gain: float = Field(default=db_to_linear(-30.0), description="linear gain at 1 m")
    exponent_direct: float = 3.5
    exponent_reflected: float = 2.2
    direct_los: bool = False
    reflected_los: bool = True
    angular_spread_deg: float = 10.0

    @field_validator("reference_gain")
    @classmethod
    def validate_reference_gain(cls, v):
        if v <= 0:
            raise ValueError("reference_gain must be positive")
        return v

    @model_validator(mode="after")
    def check_exponents(self):
        if not self.direct_los and self.exponent_direct < 2:
            raise ValueError("NLoS pathloss exponent must be at least 2")
        if not self.reflected_los and self.exponent_reflected < 2:
            raise ValueError("NLoS pathloss exponent must be at least 2")
        if self.exponent_direct <= 0 or self.exponent_reflected <= 0:
            raise ValueError("Pathloss exponents must be positive")
        return self

    def gain(self, distance: float, exponent: float) -> float:
        """Average power attenuation at the given distance."""
        return self.reference_gain * max(distance, 1.0) ** (-exponent)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    bs_position: Position
    ris_position: Position
    user_positions: Tuple[Position, Position]
    wavelength: float
    L: int
    N: int
    bs_spacing: float
    ris_spacing: float
    ris_grid: Tuple[int, int]

    @field_validator("wavelength", "bs_spacing", "ris_spacing")
    @classmethod
    def validate_positive(cls, v):
        if v <= 0:
            raise ValueError("Wavelength and element spacings must be positive")
        return v

    @field_validator("L")
    @classmethod
    def validate_antennas(cls, v):
        if v < 1:
            raise ValueError("The BS needs at least one antenna")
        return v

    @model_validator(mode="after")
    def check_grid(self):
        rows, cols = self.ris_grid
        if rows * cols != self.N:
            raise ValueError(f"RIS grid {rows}x{cols} does not hold N={self.N} elements")
        return self


class SimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    L: int = 8
    N_list: List[int] = Field(default_factory=lambda: [4, 16, 36, 64])
    B: float = 10e6
    P_Tr: float = dbm_to_watts(40.0)
    T_coh: int = 2000
    sigma_v2: float = dbm_to_watts(-100.0)
    sigma_z2: float = dbm_to_watts(-100.0)
    P_UL: float = dbm_to_watts(30.0)
    kappa: float = 1e4
    epsilon: float = 1.0
    rel_tol: float = 1e-5
    max_iterations: int = 50
    alpha_max: float = 10.0
    wavelength: float = 0.1
    bs_ris_distance: float = 400.0
    user_center_distance: float = 100.0
    user_radius: float = 50.0
    user_center_angle_deg: float = 45.0
    reference_gain_dB: float = -30.0
    exponent_direct: float = 3.5
    exponent_reflected: float = 2.2
    angular_spread_deg: float = 10.0
    drops: int = 50
    base_seed: int = 2024
    schemes: List[Scheme] = Field(default_factory=lambda: list(Scheme))
    csi: CsiMode = CsiMode.PERFECT

    @field_validator("L", "T_coh", "drops", "max_iterations")
    @classmethod
    def validate_positive_int(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("B", "P_Tr", "sigma_v2", "P_UL", "kappa", "wavelength",
                     "bs_ris_distance", "user_center_distance", "alpha_max")
    @classmethod
    def validate_positive_float(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("sigma_z2", "epsilon", "rel_tol", "user_radius", "angular_spread_deg")
    @classmethod
    def validate_nonnegative(cls, v):
        if v < 0:
            raise ValueError("must not be negative")
        return v

    @field_validator("N_list")
    @classmethod
    def validate_n_list(cls, v):
        if not v:
            raise ValueError("N_list must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("every RIS size in N_list must be at least 1")
        return sorted(set(v))

    @field_validator("schemes")
    @classmethod
    def validate_schemes(cls, v):
        if not v:
            raise ValueError("at least one scheme is required")
        return [s for s in Scheme if s in v]

    @model_validator(mode="after")
    def check_pilot_budgets(self):
        modes = {scheme.pilot_mode for scheme in self.schemes}
        if PilotMode.HALF in modes:
            odd = [n for n in self.N_list if n % 2]
            if odd:
                raise ValueError(f"Half pilot budget requires even N, got {odd}")
        for mode in sorted(modes, key=lambda m: m.value):
            tau = PilotBudget.symbols(mode, max(self.N_list), 2)
            if tau >= self.T_coh:
                raise ValueError(f"pilot budget {tau} exceeds T_coh {self.T_coh}")
        return self

    @property
    def pathloss(self) -> PathlossParams:
        return PathlossParams(
            reference_gain=db_to_linear(self.reference_gain_dB),
            exponent_direct=self.exponent_direct,
            exponent_reflected=self.exponent_reflected,
            angular_spread_deg=self.angular_spread_deg,
        )


class DropResult(BaseModel):
    scheme: Scheme
    csi: CsiMode
    N: int
    drop_index: int
    seed: int
    r_net: float
    xi_obj: float
    r_p: List[float]
    r_n: List[float]
    r_c_candidate: List[float]
    r_c: float
    b_dl: List[float]
    tau: List[int]
    iterations: List[int]
    status: SolveStatus

    @field_validator("r_net")
    @classmethod
    def validate_rate(cls, v):
        if v < 0:
            raise ValueError("Net rate cannot be negative")
        return v

    def recombined_net(self) -> float:
        """Net rate rebuilt from the stored per-block components."""
        return 0.5 * sum(p + n + 0.5 * self.r_c for p, n in zip(self.r_p, self.r_n))


class ResultRow(BaseModel):
    scheme: Scheme
    csi: CsiMode
    N: int
    drops: int
    mean_Rnet_bps: float
    se_Rnet_bps: float
    mean_obj_bps: float
    se_obj_bps: float
    infeasible_count: int


class PilotBudgetRequest(BaseModel):
    N: int
    K: int = 2
    mode: PilotMode


class OrsRatioRequest(BaseModel):
    lsf_1: float
    lsf_2: float
    alpha_max: float = 10.0


class OrsRatioResponse(BaseModel):
    gamma: float
    alpha: float


class DownlinkBandwidthRequest(BaseModel):
    B: float
    tau: int
    T_coh: int


class DownlinkBandwidthResponse(BaseModel):
    B_DL: float


class DropRequest(BaseModel):
    config: SimConfig = Field(default_factory=SimConfig)
    N: int
    drop_index: int = 0
    csi: Optional[CsiMode] = None
