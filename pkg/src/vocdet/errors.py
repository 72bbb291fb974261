"""Exception types shared across the package."""


class VocdetError(Exception):
    """Base class for package-specific failures."""


class AudioFormatError(VocdetError):
    """WAV file uses an encoding outside the supported set (PCM16, float32)."""


class VocoderBackendError(VocdetError):
    """A vocoder backend failed to synthesize; carries the backend name."""

    def __init__(self, backend_name: str, message: str):
        super().__init__(f"backend '{backend_name}': {message}")
        self.backend_name = backend_name


class ConfigurationError(VocdetError):
    """Inconsistent or incomplete run configuration (bad keys, missing files,
    registry mismatches, absent manifest splits)."""


class TrainingDivergedError(VocdetError):
    """Training aborted on a non-finite loss; a diagnostic checkpoint was written."""
