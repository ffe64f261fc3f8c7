"""Exception hierarchy shared by the package.

Every domain error derives from :class:`SoftSensorError` so the CLI can map
it to exit code 1.
"""


class SoftSensorError(Exception):
    """Base class for domain errors."""


# welldata
class MissingColumn(SoftSensorError):
    pass


class DuplicateTimestamp(SoftSensorError):
    pass


class EmptyFile(SoftSensorError):
    pass


class InconsistentDepth(SoftSensorError):
    pass


class IoFailure(SoftSensorError):
    pass


# synthgen
class InvalidConfig(SoftSensorError):
    pass


class NoFlow(SoftSensorError):
    pass


# conditioning
class DivisionDomain(SoftSensorError):
    pass


class TooFewSamples(SoftSensorError):
    pass


class ConstantFeature(SoftSensorError):
    pass


class EmptyPartition(SoftSensorError):
    pass


# models
class SingularSystem(SoftSensorError):
    pass


class ShapeMismatch(SoftSensorError):
    pass


class DivergenceDetected(SoftSensorError):
    pass


class DomainError(SoftSensorError):
    pass


# training / evaluation / transfer
class TooFewWells(SoftSensorError):
    pass


class LengthMismatch(SoftSensorError):
    pass


class IncompatibleFeatures(SoftSensorError):
    pass
