class DivergedError(FloatingPointError):
    """A forward pass produced a non-finite loss.

    ``history`` carries the training trajectory recorded up to the failing
    iteration when raised from the trainer, otherwise ``None``.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class ConfigError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed on-disk file (IDX dataset or checkpoint)."""
