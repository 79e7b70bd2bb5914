from pydantic import BaseModel, ConfigDict, Field, computed_field


class NoiseBudget(BaseModel):
    """Laplace mechanism parameters; the noise scale is always sensitivity / epsilon."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(gt=0)
    sensitivity: float = Field(gt=0)

    @computed_field
    @property
    def scale(self) -> float:
        return self.sensitivity / self.epsilon

    @computed_field
    @property
    def variance(self) -> float:
        return 2.0 * self.scale**2

    @classmethod
    def from_scale(cls, scale: float, sensitivity: float = 1.0) -> "NoiseBudget":
        """Budget whose noise scale is ``scale`` for the given sensitivity."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        return cls(epsilon=sensitivity / scale, sensitivity=sensitivity)
