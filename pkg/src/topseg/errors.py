"""Exception hierarchy shared by all topseg modules."""


class TopsegError(Exception):
    """Base class for all errors raised by topseg."""


class ImageError(TopsegError):
    """Invalid image data or incompatible shapes."""


class NiftiError(TopsegError):
    """Malformed or unsupported NIfTI file.

    ``field`` names the offending header field (or stream stage).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class MorphologyError(TopsegError):
    """Invalid input to a morphology operation."""


class PersistenceError(TopsegError):
    """Invalid input to the persistence engine."""


class OracleTooLargeError(PersistenceError):
    """Instance exceeds the brute-force oracle's size cap."""


class PipelineError(TopsegError):
    """Pipeline failure, tagged with the stage that raised it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class NoOnsetError(PipelineError):
    """Voxel-count derivative never exceeded the threshold.

    Carries the sampled curve for diagnosis.
    """

    def __init__(self, stage: str, message: str, curve=None):
        self.curve = curve
        super().__init__(stage, message)


class ConfigError(TopsegError):
    """Invalid configuration value or file."""


class ValidationError(TopsegError):
    """Hypothesis checker received inputs it cannot score."""
