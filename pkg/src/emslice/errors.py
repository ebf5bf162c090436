"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration detected at startup (bad range, unknown key, ...)."""


class ContractViolation(RuntimeError):
    """A caller broke an interface contract (shape mismatch, malformed allocation, ...)."""


class NumericsError(RuntimeError):
    """Non-finite values reached a numerical kernel that requires finite inputs."""
