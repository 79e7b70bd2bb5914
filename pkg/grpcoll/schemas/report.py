from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

SCHEMA_VERSION = "1"


class ExportFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class Mode(str, Enum):
    PLAIN = "plain"
    COLLABORATIVE = "collaborative"
    NON_COLLABORATIVE = "non_collaborative"


class ParticipantMetrics(BaseModel):
    participant: int
    train_samples: int
    test_samples: int = 0
    accuracy: Optional[float] = Field(default=None, ge=0, le=1)
    obfuscation_seconds: float = 0.0
    bytes_sent: int = 0


class RunMetrics(BaseModel):
    label: str
    dataset: str
    scheme: str
    mode: Mode = Mode.COLLABORATIVE
    participants: int = 1
    k: Optional[int] = None
    rho: Optional[float] = None
    epsilon: Optional[float] = None
    noise_scale: Optional[float] = None
    condition: Optional[float] = None
    seed: int = 0
    accuracy: Optional[float] = Field(default=None, ge=0, le=1)
    accuracy_min: Optional[float] = Field(default=None, ge=0, le=1)
    accuracy_max: Optional[float] = Field(default=None, ge=0, le=1)
    train_seconds: float = 0.0
    test_seconds: float = 0.0
    obfuscation_seconds: float = 0.0
    bytes_transferred: int = 0
    extra: Dict[str, float] = {}
    per_participant: List[ParticipantMetrics] = []


class ExperimentReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    experiment_id: str
    build_id: str = "unknown"
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    config: Dict[str, Any] = {}
    seeds: Dict[str, int] = {}
    runs: List[RunMetrics] = []
    references: Dict[str, Any] = {}
    summary: Dict[str, Any] = {}
    notes: List[str] = []
    artifacts: List[str] = []

    def run(self, label: str) -> RunMetrics:
        for run in self.runs:
            if run.label == label:
                return run
        raise KeyError(label)
