"""Exception hierarchy shared by every module."""


class VNThermoError(Exception):
    """Base class for all package errors."""


class LayoutConflict(VNThermoError):
    pass


class UnknownSubsystem(VNThermoError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return Exception.__str__(self)


class NotUnitary(VNThermoError):
    pass


class NumericalFailure(VNThermoError):
    pass


class InvalidState(VNThermoError):
    pass


class InvalidDistribution(VNThermoError):
    pass


class InvalidMeasurement(VNThermoError):
    pass


class ApparatusNotReady(VNThermoError):
    pass


# thermodynamic preconditions
class Singularity(VNThermoError):
    pass


class EmptyChamber(VNThermoError):
    pass


class OccupiedChamber(VNThermoError):
    pass


class UnknownPosition(VNThermoError):
    pass


class ResetInfeasible(VNThermoError):
    pass


class PartitionError(VNThermoError):
    pass


class ProtocolError(VNThermoError):
    """Protocol fails validation against its layout."""


class ProtocolParseError(ProtocolError):
    """Protocol document is malformed: bad syntax, unknown or missing keys, wrong types."""


class StepError(VNThermoError):
    """A step raised during a run; carries the offending step id."""

    def __init__(self, step_id: str, cause: Exception):
        self.step_id = step_id
        self.cause = cause
        super().__init__(f"step {step_id!r}: {type(cause).__name__}: {cause}")
