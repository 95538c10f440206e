"""Exception hierarchy shared across the harness.

Error names mirror the failure modes of the public operations; everything
derives from SpecHarnessError so callers can catch harness failures broadly.
"""


class SpecHarnessError(Exception):
    """Base class for all harness errors."""


# --- spectrum loading / slicing -------------------------------------------

class MalformedFile(SpecHarnessError):
    pass


class NonMonotonicWavelength(MalformedFile):
    pass


class NonFiniteValue(MalformedFile):
    pass


class EmptySlice(SpecHarnessError):
    pass


class TooShort(SpecHarnessError):
    pass


# --- visualization tool ----------------------------------------------------

class EmptyRange(SpecHarnessError):
    pass


class SessionNotFound(SpecHarnessError):
    pass


class BadArguments(SpecHarnessError):
    pass


# --- trajectory serialization ---------------------------------------------

class SchemaMismatch(SpecHarnessError):
    pass


# --- policy clients --------------------------------------------------------

class PolicyFailure(SpecHarnessError):
    """Base for failures talking to a policy endpoint."""


class EndpointUnavailable(PolicyFailure):
    pass


class TurnTimeout(PolicyFailure):
    pass


class ResponseTruncated(PolicyFailure):
    pass


class UnparseableScore(SpecHarnessError):
    pass


# --- rollout engine --------------------------------------------------------

class AllRolloutsFailed(SpecHarnessError):
    pass


# --- reward / advantages ---------------------------------------------------

class EmptyGroup(SpecHarnessError):
    pass


# --- bench construction ----------------------------------------------------

class InsufficientData(SpecHarnessError):
    pass


class TrainingDiverged(SpecHarnessError):
    pass


class CountUnavailable(SpecHarnessError):
    pass


class MissingCoordinates(SpecHarnessError):
    pass


# --- metrics ----------------------------------------------------------------

class LengthMismatch(SpecHarnessError):
    pass


class DegenerateInput(SpecHarnessError):
    pass


class EmptyList(SpecHarnessError):
    pass


class OutOfRangeScore(SpecHarnessError):
    pass


# --- annotation service ------------------------------------------------------

class BindFailure(SpecHarnessError):
    pass


class CorruptStore(SpecHarnessError):
    pass
