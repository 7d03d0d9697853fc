"""Exception types shared across the package."""


class SubjectTuneError(Exception):
    """Base class for package errors."""


class ConfigurationError(SubjectTuneError):
    """Invalid configuration value or unknown identifier."""


class BackendUnavailableError(SubjectTuneError):
    """A model backend (generator, extractor, detector) cannot be loaded.

    The message carries instructions for obtaining the missing weights or
    packages; offline runs should fall back to stubs or the toy backbone.
    """


class ExtractorError(SubjectTuneError):
    """A feature-extractor backend failed while embedding an input."""

    def __init__(self, backend_name: str, message: str):
        super().__init__(f"extractor '{backend_name}': {message}")
        self.backend_name = backend_name


class ResolutionMismatchError(SubjectTuneError):
    """Inputs that must share a resolution do not."""


class SubjectNotFoundError(SubjectTuneError):
    """Detector produced no candidate above the confidence threshold."""


class EngineStepError(SubjectTuneError):
    """An optimization step aborted (non-finite loss/gradient or backbone failure)."""

    def __init__(self, step_index: int, message: str):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index
