from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Dataset(BaseModel):
    """
    Labeled real vectors with per-dimension domain bounds.

    ``vectors`` is an (n, d) float64 array, ``labels`` an (n,) int64 array.
    Arrays are copied and frozen on construction.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vectors: np.ndarray
    labels: np.ndarray
    class_count: int = Field(gt=0)
    lower: np.ndarray
    upper: np.ndarray
    provenance: str = ""

    @field_validator("vectors", "lower", "upper", mode="before")
    @classmethod
    def as_float(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    @field_validator("labels", mode="before")
    @classmethod
    def as_int(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=np.int64).reshape(-1)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_shapes(self) -> "Dataset":
        if self.vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D array")
        n, d = self.vectors.shape
        if self.labels.shape != (n,):
            raise ValueError(f"{n} vectors but {self.labels.shape[0]} labels")
        if self.lower.shape != (d,) or self.upper.shape != (d,):
            raise ValueError("bounds must have one entry per dimension")
        if np.any(self.upper < self.lower):
            raise ValueError("upper bound below lower bound")
        if n:
            if self.labels.min() < 0 or self.labels.max() >= self.class_count:
                raise ValueError("label outside [0, class_count)")
            if np.any(self.vectors < self.lower) or np.any(self.vectors > self.upper):
                raise ValueError("value outside domain bounds")
        return self

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return self.size


class ShardPlan(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    participant_count: int = Field(gt=0)
    assignment: np.ndarray
    seed: int = Field(ge=0)

    def indices(self, participant: int) -> np.ndarray:
        """Sample indices owned by one participant, ascending."""
        return np.flatnonzero(self.assignment == participant)

    def sizes(self) -> Tuple[int, ...]:
        counts = np.bincount(self.assignment, minlength=self.participant_count)
        return tuple(int(c) for c in counts)
