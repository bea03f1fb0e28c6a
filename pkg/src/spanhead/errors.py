"""Exception types shared across the library."""


class SpanHeadError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(SpanHeadError):
    """Tensor shapes, dimensions or indices do not fit an operation."""


class ConfigError(SpanHeadError):
    """A configuration field has an invalid or inconsistent value."""


class ParseError(SpanHeadError):
    """Input document does not follow the expected schema."""


class FormatError(SpanHeadError):
    """A binary file does not follow the declared wire format."""


class CheckpointError(SpanHeadError):
    """A checkpoint file is unreadable or belongs to a different config."""


class GradCheckError(SpanHeadError):
    """Gradient checking hit a non-finite analytic or numeric value."""


class TrainingError(SpanHeadError):
    """The training loop hit an unrecoverable state (e.g. non-finite loss)."""
