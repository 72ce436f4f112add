"""Exception types shared across the package."""


class ModnormError(Exception):
    """Base class for all package errors."""


class ShapeError(ModnormError):
    """Tensor or vector dimensions do not match the operation's contract."""


class DegenerateSubset(ModnormError):
    """A reduction was requested over an empty sample subset or zero spatial size."""


class MissingModalityTag(ModnormError):
    """A per-modality layer received a sample without a usable modality tag."""


class ConfigError(ModnormError):
    """Invalid or inconsistent configuration."""


class SamplerError(ModnormError):
    """Batch composition cannot be satisfied by the dataset."""


class InsufficientData(ModnormError):
    """Not enough data points for the requested statistic."""


class DegenerateBatch(ModnormError):
    """Batch lacks the structure a loss requires (e.g. a single identity)."""


class NormalizationError(ModnormError):
    """A vector with zero norm cannot be normalized."""


class ProtocolError(ModnormError):
    """Query/gallery sets violate the retrieval protocol."""
