"""Exception hierarchy.

Everything raised on bad data derives from :class:`DynbandError`, so the CLI
can map it to a single exit code.
"""


class DynbandError(Exception):
    """Base class for data errors raised by this package."""


# geometry
class NonPositiveDepth(DynbandError):
    pass


class TooFewPoints(DynbandError):
    pass


class DegenerateConfiguration(DynbandError):
    pass


# file parsing
class MalformedLine(DynbandError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        msg = f"malformed line {line_no}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class DuplicateTimestamp(DynbandError):
    pass


class UnsupportedPngFormat(DynbandError):
    pass


class DecodeError(DynbandError):
    pass


class IdMismatch(DynbandError):
    def __init__(self, instance_id, missing_from):
        self.instance_id = instance_id
        self.missing_from = missing_from
        super().__init__(f"instance id {instance_id} missing from {missing_from}")


class MalformedSidecar(DynbandError):
    pass


# filtering
class EmptyImage(DynbandError):
    pass


class InsufficientDepth(DynbandError):
    pass


class InvalidParams(DynbandError):
    pass


# synthetic data / odometry
class InvalidConfig(DynbandError):
    pass


class TooFewCorrespondences(DynbandError):
    pass


class NoConsensus(DynbandError):
    pass


class EmptySequence(DynbandError):
    pass


# metrics / plotting
class EmptyInput(DynbandError):
    pass


class TooFewMatches(DynbandError):
    pass


class EmptySeries(DynbandError):
    pass
