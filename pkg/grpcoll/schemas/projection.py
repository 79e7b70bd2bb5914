from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ProjectionKey(BaseModel):
    """A participant's private k x d Gaussian matrix. Never leaves the participant."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    matrix: np.ndarray
    k: int = Field(gt=0)
    d: int = Field(gt=0)
    # None for keys imported from a blob or built from an explicit matrix
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)
    scaled: bool = True

    @field_validator("matrix", mode="before")
    @classmethod
    def freeze_matrix(cls, v) -> np.ndarray:
        matrix = np.array(v, dtype=np.float64)
        matrix.setflags(write=False)
        return matrix

    @model_validator(mode="after")
    def check_matrix(self) -> "ProjectionKey":
        if self.k > self.d:
            raise ValueError(f"k={self.k} exceeds d={self.d}")
        if self.matrix.shape != (self.k, self.d):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({self.k}, {self.d})")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("matrix has non-finite entries")
        return self

    @property
    def effective_matrix(self) -> np.ndarray:
        """The linear map actually applied, 1/sqrt(k) folded in when scaled."""
        if self.scaled:
            return self.matrix / np.sqrt(self.k)
        return self.matrix


class ConditionReport(BaseModel):
    frobenius_norm: float = Field(ge=0)
    pseudoinverse_frobenius_norm: float = Field(ge=0)
    condition_number: float = Field(ge=0)
    rank: int = Field(ge=0)
