"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


class ConfigError(ValueError):
    """Raised when a configuration or type invariant is violated."""
