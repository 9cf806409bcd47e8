class ValidationError(ValueError):
    """Invalid input: bad shapes, out-of-range indices, malformed files."""


class NonConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget."""
