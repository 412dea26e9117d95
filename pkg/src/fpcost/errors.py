"""Exception hierarchy shared by the whole package.

Everything raised on purpose derives from FpCostError so callers can catch
one type at the CLI boundary.  UnsupportedHost is special-cased there: it
means the machine cannot run the measurement kernels at all (wrong
architecture, no AVX, or executable memory is forbidden), which is an
environment problem rather than a bug.
"""

from __future__ import annotations


class FpCostError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedHost(FpCostError):
    """The host cannot execute the measurement kernels at all."""


class MissingFeature(UnsupportedHost):
    """A specific ISA extension needed by the requested kernel is absent."""


class InapplicableOutcome(FpCostError):
    """The (operation, outcome class) combination does not exist."""


class ImpossibleOutcome(FpCostError):
    """No operand values can produce the requested outcome for this operation."""


class OperandMismatch(FpCostError):
    """An operand set does not fit the kernel it was paired with."""


class MixedLanes(FpCostError):
    """Vector lanes of an operand set do not all produce the same outcome."""


class EnvMismatch(FpCostError):
    """The live MXCSR state does not match the requested FP environment."""


class AffinityUnsupported(FpCostError):
    """The OS offers no way to pin this thread to a core."""


class ClockUnstable(FpCostError):
    """Timing calibration produced self-inconsistent readings."""


class UnmodeledOp(FpCostError):
    """No analytic throughput model exists for the requested operation."""


class UnknownMachine(FpCostError):
    """The reference table has no entry for the named machine."""


class EmptyResults(FpCostError):
    """A report was requested for an empty result set."""
