from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from grpcoll.core.config import settings


class LayerKind(str, Enum):
    DENSE = "dense"
    CONV2D = "conv2d"
    MAXPOOL = "maxpool"
    RELU = "relu"
    DROPOUT = "dropout"
    FLATTEN = "flatten"
    SOFTMAX = "softmax"


class LayerSpec(BaseModel):
    """Description of one layer; parameter tensors live on the layer object."""

    kind: LayerKind
    in_features: Optional[int] = None
    out_features: Optional[int] = None
    in_channels: Optional[int] = None
    out_channels: Optional[int] = None
    kernel: int = 5
    pool: int = 2
    rate: float = 0.0

    @model_validator(mode="after")
    def check_kind(self) -> "LayerSpec":
        if self.kind == LayerKind.DENSE and not (self.in_features and self.out_features):
            raise ValueError("dense layer needs in_features and out_features")
        if self.kind == LayerKind.CONV2D and not (self.in_channels and self.out_channels):
            raise ValueError("conv2d layer needs in_channels and out_channels")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        return self


class TrainConfig(BaseModel):
    learning_rate: float = Field(default=settings.LEARNING_RATE, gt=0)
    batch_size: int = Field(default=settings.BATCH_SIZE, gt=0)
    epochs: int = Field(default=settings.EPOCHS, ge=0)
    weight_decay: float = Field(default=0.0, ge=0, description="lambda of the L2 term")
    seed: int = Field(default=settings.DEFAULT_SEED, ge=0)
    shuffle: bool = True


class EpochStats(BaseModel):
    epoch: int
    loss: float
    accuracy: float = Field(ge=0, le=1)


class TrainHistory(BaseModel):
    epochs: List[EpochStats] = []
    train_seconds: float = 0.0

    @property
    def final_accuracy(self) -> Optional[float]:
        return self.epochs[-1].accuracy if self.epochs else None


class ModelSummary(BaseModel):
    name: str
    input_dim: int
    input_shape: Tuple[int, ...]
    class_count: int
    layers: List[LayerSpec]
    parameter_count: int
