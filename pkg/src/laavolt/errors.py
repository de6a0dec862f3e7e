"""Exception hierarchy shared by every laavolt module."""

from __future__ import annotations


class LaaError(Exception):
    """Base class for all errors raised by laavolt."""


# -- topology ---------------------------------------------------------------

class TopologyError(LaaError, ValueError):
    pass


class NonRadial(TopologyError):
    """The branch set does not form a spanning tree rooted at bus 1."""


class CycleDetected(NonRadial):
    pass


class Disconnected(NonRadial):
    pass


class DuplicateBranch(TopologyError):
    pass


class BadRoot(TopologyError):
    pass


class UnknownBus(LaaError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else "unknown bus"


# -- load models ------------------------------------------------------------

class NonpositiveVoltage(LaaError, ValueError):
    pass


class NonpositiveSquaredVoltage(LaaError, ValueError):
    pass


class ZeroCount(LaaError, ValueError):
    pass


class CoefficientSumError(LaaError, ValueError):
    pass


class NonpositivePower(LaaError, ValueError):
    pass


# -- solvers ----------------------------------------------------------------

class NotConverged(LaaError, RuntimeError):
    def __init__(self, message: str, iterations: int = 0, mismatch: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.mismatch = mismatch


class SingularNetwork(LaaError, RuntimeError):
    pass


class SingularSystem(LaaError, RuntimeError):
    pass


class NegativeSquaredVoltage(LaaError, RuntimeError):
    """A squared voltage went non-positive: the operating point has collapsed."""

    def __init__(self, message: str, bus: int | None = None):
        super().__init__(message)
        self.bus = bus


# -- attacks ----------------------------------------------------------------

class AlreadyViolated(LaaError, ValueError):
    pass


class NonpositiveDenominator(LaaError, ValueError):
    pass


class NotLeaf(LaaError, ValueError):
    pass


class NegativeCriticalPower(LaaError, ValueError):
    pass


# -- io ---------------------------------------------------------------------

class ParseError(LaaError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)
        self.line = line
        self.column = column


class UnitAmbiguity(LaaError, ValueError):
    pass
