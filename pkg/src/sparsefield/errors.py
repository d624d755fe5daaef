"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A pattern or schedule configuration is invalid.

    ``field`` names the offending parameter so callers (the CLI in
    particular) can point the user at it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""
