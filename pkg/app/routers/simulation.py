from typing import List

from fastapi import APIRouter, HTTPException, status

from app.channel_estimation import pilot_budget
from app.harness import run_drop
from app.ors_core import downlink_bandwidth, lsf_ratio, ors_ratio
from app.schemas import (DownlinkBandwidthRequest, DownlinkBandwidthResponse, DropRequest, DropResult,
                         OrsRatioRequest, OrsRatioResponse, PilotBudget, PilotBudgetRequest)

router = APIRouter()


def _bad_request(e: ValueError) -> HTTPException:
    return HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e))


@router.post("/pilot-budget", response_model=PilotBudget)
def get_pilot_budget(request: PilotBudgetRequest):
    """Pilot symbols per coherence block."""
    try:
        return pilot_budget(request.N, request.K, request.mode)
    except ValueError as e:
        raise _bad_request(e)


@router.post("/ors-ratio", response_model=OrsRatioResponse)
def get_ors_ratio(request: OrsRatioRequest):
    """LSF asymmetry and the resulting ORS ratio."""
    try:
        return OrsRatioResponse(
            gamma=lsf_ratio(request.lsf_1, request.lsf_2),
            alpha=ors_ratio(request.lsf_1, request.lsf_2, alpha_max=request.alpha_max),
        )
    except ValueError as e:
        raise _bad_request(e)


@router.post("/downlink-bandwidth", response_model=DownlinkBandwidthResponse)
def get_downlink_bandwidth(request: DownlinkBandwidthRequest):
    """Bandwidth left for data after the pilot phase."""
    try:
        return DownlinkBandwidthResponse(B_DL=downlink_bandwidth(request.B, request.tau, request.T_coh))
    except ValueError as e:
        raise _bad_request(e)


@router.post("/drop", response_model=List[DropResult])
def simulate_drop(request: DropRequest):
    """Run one seeded drop of the configured schemes."""
    try:
        return run_drop(request.config, request.N, request.drop_index, csi=request.csi)
    except ValueError as e:
        raise _bad_request(e)
