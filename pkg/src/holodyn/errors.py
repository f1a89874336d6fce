"""Exception hierarchy shared by all modules."""


class HolodynError(Exception):
    """Base class; the CLI maps any subclass to exit code 1."""


class ZeroVector(HolodynError):
    pass


class Indeterminate(HolodynError):
    pass


class DegenerateMap(HolodynError):
    pass


class NoConvergence(HolodynError):
    pass


class IllConditioned(HolodynError):
    pass


class RootFailure(HolodynError):
    pass


class DegenerateFiber(HolodynError):
    pass


class ExceptionalStart(HolodynError):
    pass


class SupportViolation(HolodynError):
    pass


class CriticalHit(HolodynError):
    pass


class InconsistentCocycle(HolodynError):
    pass


class NoSplitting(HolodynError):
    pass


class CriticalCollision(HolodynError):
    pass


class NewtonStall(HolodynError):
    pass


class InsufficientData(HolodynError):
    pass


class OutOfDomain(HolodynError):
    pass


class ConfigError(Exception):
    """Usage/config failure (CLI exit code 2)."""
