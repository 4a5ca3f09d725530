from .protocol import (
    BinaryFrame,
    ControlMessage,
    ENCODING_PNG,
    ENCODING_RAW,
    PROTOCOL_VERSION,
    ServerEvent,
    ack,
    decode_message,
    encode_message,
    error_event,
)
from .service import (
    ClientState,
    CommandProcessor,
    ServiceHandle,
    TrainingService,
    camera_from_pose,
    serve,
)

__all__ = [
    "BinaryFrame", "ControlMessage", "ServerEvent", "PROTOCOL_VERSION",
    "ENCODING_PNG", "ENCODING_RAW", "ack", "decode_message", "encode_message",
    "error_event", "ClientState", "CommandProcessor", "ServiceHandle",
    "TrainingService", "camera_from_pose", "serve",
]
