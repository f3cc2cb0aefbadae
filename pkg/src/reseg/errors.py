"""Exception types raised by the engine.

The CLI maps any ResegError to a nonzero exit with the message on stderr;
library callers can catch the specific subclass they care about.
"""


class ResegError(Exception):
    """Base class for all engine errors."""


class DimensionError(ResegError):
    """Shapes do not match, or a size precondition is violated."""


class DegenerateMaskError(ResegError):
    """An attention-mask row allows no entries, so softmax cannot normalize."""


class ZeroVectorError(ResegError):
    """A zero vector where a direction is required (cosine, normalization)."""


class GrammarError(ResegError):
    """Prompt grammar is structurally invalid."""


class MarginError(ResegError):
    """Separation-margin statistics need more variants or classes."""


class NonPositiveMarginError(MarginError):
    """A model's margin score is <= 0; merge weights would be meaningless.

    Callers may drop the offending model and retry.
    """


class CheckpointError(ResegError):
    """Checkpoint contents are incompatible, incomplete, or malformed."""


class ConfigError(ResegError):
    """Inconsistent run configuration (hierarchy depth, flag combinations)."""


class DataError(ResegError):
    """Evaluation inputs are out of range or mutually inconsistent."""
