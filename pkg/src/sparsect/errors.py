"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad geometry, shape mismatch, schema violation."""


class NumericalError(RuntimeError):
    """Numerical failure: non-finite objective, singular system, infeasible selection."""
