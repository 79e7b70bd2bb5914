from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ReconstructionReport(BaseModel):
    """Worst-case reconstruction of one vector by a coordinator that holds the key."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    estimate: np.ndarray
    per_element_variance: np.ndarray
    mean_variance: float
    l2_error: Optional[float] = Field(default=None, ge=0)
