from enum import Enum, IntEnum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

MAGIC = b"GRPC"
HEADER_SIZE = 12


class MsgType(IntEnum):
    HELLO = 1
    DATASET_CHUNK = 2
    DATASET_END = 3
    TRAIN_ACK = 4
    CLASSIFY_REQ = 5
    CLASSIFY_RESP = 6
    ERROR = 7


class WireMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    msg_type: MsgType
    payload: bytes = b""
    version: int = Field(default=1, ge=0, lt=2**16)
    magic: bytes = MAGIC

    @property
    def payload_len(self) -> int:
        return len(self.payload)

    @property
    def frame_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


class Role(str, Enum):
    PARTICIPANT = "participant"
    COORDINATOR = "coordinator"


class SessionStatus(str, Enum):
    CONNECTED = "connected"
    RECEIVING = "receiving"
    COMPLETE = "complete"
    FAILED = "failed"
    CLOSED = "closed"


class SessionState(BaseModel):
    """
    Per-connection state. Sessions are numbered, never tied to a participant identity.

    ``bytes_received`` counts the dataset upload (HELLO through DATASET_END);
    classification traffic is counted separately in ``classify_bytes``.
    """

    session_id: int
    role: Role = Role.COORDINATOR
    status: SessionStatus = SessionStatus.CONNECTED
    expected_dimension: Optional[int] = None
    class_count: Optional[int] = None
    declared_samples: Optional[int] = None
    received_samples: int = 0
    bytes_received: int = 0
    classify_requests: int = 0
    classify_bytes: int = 0


class TransferReport(BaseModel):
    bytes_sent: int = 0
    samples_sent: int = 0
    obfuscation_time: float = 0.0
    transmission_time: float = 0.0
    test_samples: int = 0
    test_correct: int = 0
    test_bytes_sent: int = 0
    test_obfuscation_time: float = 0.0
    test_seconds: float = 0.0
    errors: Dict[str, int] = {}


# ops API bodies


class CoordinatorStatus(BaseModel):
    expected_participants: int
    completed_participants: int
    received_samples: int
    dimension: Optional[int] = None
    class_count: Optional[int] = None
    training: bool
    ready: bool
    failure: Optional[str] = None
    sessions: List[SessionState] = []


class ClassifyRequest(BaseModel):
    vector: List[float] = Field(min_length=1)


class ClassifyResponse(BaseModel):
    label: int = Field(ge=0)
    probabilities: List[float]
