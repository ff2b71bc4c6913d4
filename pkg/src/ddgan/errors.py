"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with an operation; names the offending axis."""

    def __init__(self, op: str, axis: str, expected, got):
        self.op = op
        self.axis = axis
        self.expected = expected
        self.got = got
        super().__init__(f"{op}: {axis} mismatch, expected {expected}, got {got}")


class ConfigError(ValueError):
    """Invalid or unknown configuration key/value."""


class CheckpointError(IOError):
    """Malformed or incompatible checkpoint file."""


class DataError(IOError):
    """Malformed image file or dataset layout."""
