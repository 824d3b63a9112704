"""Exception hierarchy shared by every dspace module."""


class DSpaceError(Exception):
    """Base class for all dspace errors."""


class ConfigurationError(DSpaceError):
    """Invalid definitions, unknown actuator kinds, bad objectives."""


class DuplicateIdError(ConfigurationError):
    pass


class SchemaError(ConfigurationError):
    """A job document failed schema validation. ``field`` names the offending path."""

    def __init__(self, message, field=""):
        super().__init__(message)
        self.field = field


class MappingError(DSpaceError):
    pass


class EncapsulationError(DSpaceError):
    """A configuration or result does not belong to the discovery space."""


class PolicyViolation(DSpaceError):
    """A second measurement was written under the single-measurement policy."""


class IntegrityError(DSpaceError):
    pass


class ImportFormatError(DSpaceError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InsufficientDataError(DSpaceError):
    pass


class DegenerateDataError(DSpaceError):
    pass


class SpaceExhausted(DSpaceError):
    """Every configuration of the space has already been proposed in this operation."""
