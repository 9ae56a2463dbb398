"""NOMA baseline: private streams only, decoded with SIC at the G^P user."""
import logging
from typing import Optional, Union

import numpy as np

from app.models import EstimatedCsi, NomaSolution
from app.schemas import PilotMode
from app.sca_optimizer import BlockParams, SchemeLayout, StreamLink, solve_block

logger = logging.getLogger(__name__)

# The G^N stream must be decodable at the G^P user (link PN, before SIC) and at
# its own receiver (link N); the G^P user then sees no interference from it.
NOMA_LAYOUT = SchemeLayout(
    name="noma",
    targets={"P": "P", "N": "N"},
    links=(
        StreamLink(name="P", receiver="P", signal="P"),
        StreamLink(name="PN", receiver="P", signal="N", interference=("P",)),
        StreamLink(name="N", receiver="N", signal="N", interference=("P",)),
    ),
    rates={"P": ("P",), "N": ("N", "PN")},
)


def solve_noma_block(t: int, csi: EstimatedCsi, params: BlockParams, csi_mode: Union[PilotMode, str],
                     rng: Optional[np.random.Generator] = None) -> NomaSolution:
    """
    Run the block optimizer without a common stream.

    Args:
        t (int): Block index
        csi (EstimatedCsi): Estimated channels; must match csi_mode
        params (BlockParams): Optimizer parameters (alpha_ors is ignored)
        csi_mode (Union[PilotMode, str]): Full or Half pilot budget
        rng (Optional[np.random.Generator]): Source of the random initial phases

    Returns:
        NomaSolution: Solution with w_c = 0 and no common-rate slack

    Raises:
        ValueError: If the CSI was acquired under another pilot budget
    """
    csi_mode = PilotMode(csi_mode)
    if csi.mode is not csi_mode:
        raise ValueError(f"CSI was estimated with the {csi.mode.value} budget, not {csi_mode.value}")
    solution = solve_block(t, csi, params, carry_common=None, rng=rng, layout=NOMA_LAYOUT)
    return NomaSolution(**{name: getattr(solution, name) for name in type(solution).model_fields})
