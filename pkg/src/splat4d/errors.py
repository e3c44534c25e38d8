"""Exception types raised across the package.

Everything derives from Splat4DError so callers can catch the package's
failures with one except clause; the CLI maps them to exit code 1.
"""


class Splat4DError(Exception):
    """Base class for all errors raised by splat4d."""


class DegenerateRotorError(Splat4DError):
    """A quaternion with norm below the representable floor (~1e-12)."""


class DegenerateCovarianceError(Splat4DError):
    """A covariance matrix that is singular or not positive definite."""


class DegenerateTimeExtentError(Splat4DError):
    """Temporal variance below 1e-14; conditioning on time is meaningless."""


class ShapeMismatchError(Splat4DError):
    """Array shapes inconsistent with each other or with a config."""


class SchemaError(Splat4DError):
    """A manifest or config file that does not match its schema.

    The message carries the JSON path of the offending field, e.g.
    "cameras[2].fx: expected a positive number".
    """


class DatasetError(Splat4DError):
    """An unreadable or inconsistent dataset artifact (image, flow file)."""


class CheckpointError(Splat4DError):
    """A checkpoint file with a bad magic, version, or truncated payload."""
