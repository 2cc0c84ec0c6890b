"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Unsupported or inconsistent configuration (geometry pairing, set/composite combo, solver parameters)."""


class DomainError(ValueError):
    """A point lies outside the domain an operation requires."""
