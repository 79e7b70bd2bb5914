from pathlib import Path
from typing import Optional, Tuple

from pydantic import field_validator
from pydantic_settings import BaseSettings


def parse_bind(value: str) -> Tuple[str, int]:
    """Split a ``host:port`` string; a bare ``:port`` binds localhost."""
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {value!r}")
    return (host or "127.0.0.1"), int(port)


class Settings(BaseSettings):
    API_V1_STR: str = "/api/v1"
    PROJECT_NAME: str = "grpcoll"

    # Datasets and reports
    GRPC0LL_DATA_DIR: Path = Path("data")
    REPORT_DIR: Path = Path("reports")

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True

    # Coordinator / participant transport
    COORDINATOR_BIND: str = "127.0.0.1:7461"
    HTTP_BIND: Optional[str] = None
    TIMEOUT_SECS: float = 60.0
    CHUNK_SIZE: int = 256
    WIRE_VERSION: int = 1

    # Training defaults, echoed into every report
    DEFAULT_SEED: int = 0
    LEARNING_RATE: float = 0.01
    BATCH_SIZE: int = 64
    EPOCHS: int = 30
    SPAM_DROPOUT: float = 0.5
    SPAM_NOISE_FRACTION: float = 0.05

    @field_validator("COORDINATOR_BIND", "HTTP_BIND")
    @classmethod
    def check_bind(cls, v: Optional[str]) -> Optional[str]:
        if v is not None:
            parse_bind(v)
        return v

    @field_validator("TIMEOUT_SECS", "CHUNK_SIZE", "BATCH_SIZE", "EPOCHS")
    @classmethod
    def check_positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def normalize_level(cls, v: str) -> str:
        return v.upper()

    class Config:
        case_sensitive = True
        env_file = ".env"


settings = Settings()
