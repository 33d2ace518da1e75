"""Exception hierarchy.

Every error carries a short machine-readable ``code`` which the command line
front end prints before the human message.
"""


class BackboneError(Exception):
    code = "error"


class ValidationError(BackboneError, ValueError):
    code = "validation"


class InvalidParameterError(ValidationError):
    code = "invalid_parameter"


class NotSupercriticalError(ValidationError):
    code = "not_supercritical"


class DegenerateMechanismError(ValidationError):
    code = "degenerate_mechanism"


class InfiniteMeanError(ValidationError):
    code = "infinite_mean"


class ConfigError(ValidationError):
    code = "config"


class DomainError(BackboneError, ValueError):
    code = "domain"


class NumericalError(BackboneError, ArithmeticError):
    code = "numerical"


class InvariantViolation(NumericalError):
    code = "invariant_violation"


class NStarUndefinedError(NumericalError):
    """The excursion survival mass v*_s is infinite (no Grey-type condition)."""

    code = "nstar_undefined"


class CapabilityError(BackboneError, NotImplementedError):
    code = "capability"


class PopulationBlowupError(BackboneError, RuntimeError):
    code = "population_blowup"
