"""Exception hierarchy shared across the package."""


class EastsplatError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(EastsplatError):
    """Dataset directory is missing files or contains unparseable data."""


class UnsupportedCameraModelError(DatasetError):
    """Camera model other than PINHOLE / SIMPLE_PINHOLE."""

    def __init__(self, model: str):
        super().__init__(f"unsupported camera model: {model!r} (only PINHOLE and SIMPLE_PINHOLE are handled)")
        self.model = model


class SceneFormatError(EastsplatError):
    """Scene file is corrupt or has the wrong layout."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SceneVersionError(SceneFormatError):
    """Scene file declares a version this reader does not understand."""


class WeightsFormatError(EastsplatError):
    """Weights container is malformed, incomplete, or corrupt."""


class DimensionError(EastsplatError):
    """Array arguments have incompatible shapes."""


class InvariantError(EastsplatError):
    """A domain-type invariant does not hold."""


class ContractViolationError(EastsplatError):
    """Caller broke an API contract (e.g. mismatched render/scene pairing)."""


class ProtocolError(EastsplatError):
    """Wire message cannot be decoded or violates the message schema."""

    def __init__(self, message: str, code: str = "PROTOCOL", offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.code = code
        self.offset = offset


class TrainingAborted(EastsplatError):
    """Training loop hit a fatal condition (NaN loss, empty scene)."""
