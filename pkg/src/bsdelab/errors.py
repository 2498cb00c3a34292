"""Exception hierarchy."""


class BSDELabError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(BSDELabError, ValueError):
    """Invalid numeric input or configuration value."""


class AdaptednessError(BSDELabError):
    """A builder tried to read information not yet revealed at its knot."""


class DimensionError(BSDELabError, ValueError):
    pass


class ConditioningError(BSDELabError):
    """A linear system is numerically singular for the requested regularisation."""


class ConvergenceError(BSDELabError):
    """Picard iteration failed; ``trace`` holds the iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class DriverSpecError(BSDELabError):
    """A driver violates its declared Lipschitz bound."""


class RegistryError(BSDELabError, KeyError):
    """Unknown registry name; ``field`` names the config key that referenced it."""

    def __init__(self, field, name, known):
        self.field = field
        self.name = name
        self.known = sorted(known)
        super().__init__(f"{field}: unknown name {name!r} (known: {', '.join(self.known)})")

    def __str__(self):
        return self.args[0]


class SetupError(BSDELabError):
    """Verification preconditions do not hold (distinct from a failed check)."""


class CacheFormatError(BSDELabError):
    """Malformed, truncated or incompatible ensemble cache file."""
