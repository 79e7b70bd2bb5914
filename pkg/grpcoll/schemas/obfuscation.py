from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field

from grpcoll.schemas.privacy import NoiseBudget
from grpcoll.schemas.projection import ProjectionKey


class GrpObfuscation(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Literal["grp"] = "grp"
    key: ProjectionKey


class DpObfuscation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["dp"] = "dp"
    budget: NoiseBudget
    seed: int = Field(default=0, ge=0)


class NoObfuscation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["none"] = "none"


Obfuscation = Union[GrpObfuscation, DpObfuscation, NoObfuscation]
