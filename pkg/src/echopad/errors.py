"""Exception types shared across the package."""


class EchoPadError(Exception):
    """Base class for all errors raised by this package."""


class SignalError(EchoPadError):
    """Invalid pulse/schedule parameters or malformed captures."""


class DspError(EchoPadError):
    """Invalid inputs to background subtraction or matched filtering."""


class CwtError(EchoPadError):
    """Invalid wavelet parameters or filter-bank/signal mismatch."""


class EmbedError(EchoPadError):
    """Embedding backend failures (bad config, missing or ill-shaped model)."""


class TrainingError(EchoPadError):
    """Classifier training failures (degenerate data, shape mismatch)."""


class MetricsError(EchoPadError):
    """Empty or malformed score sets."""


class SimulationError(EchoPadError):
    """Invalid scene or material configuration."""


class ProtocolError(EchoPadError):
    """Evaluation-protocol violations (subject overlap, missing classes)."""
