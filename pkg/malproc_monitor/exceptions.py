"""Exception hierarchy for malproc monitor.

The CLI maps these onto its exit codes: configuration problems exit with 2,
missing or invalid inputs with 3 and live sampler failures with 4.
"""


class MalprocError(Exception):
    """Base class for all malproc monitor errors."""

    exit_code = 1


class ConfigurationError(MalprocError):
    """Invalid configuration file, flag combination or archetype library."""

    exit_code = 2


class InvalidInputError(MalprocError, ValueError):
    """Missing, malformed or unusable input data."""

    exit_code = 3


class SamplerError(MalprocError):
    """The live process sampler could not complete a sweep."""

    exit_code = 4
