"""Exception hierarchy.

Every error raised by the package derives from :class:`DynkinError`; most also
derive from a builtin (``ValueError``, ``LookupError``) so callers that only
know the builtins still catch them.
"""

from __future__ import annotations


class DynkinError(Exception):
    """Base class for all package errors."""


# --- trees -----------------------------------------------------------------


class TreeError(DynkinError, ValueError):
    """Malformed event tree description."""


class DuplicateNodeId(TreeError):
    pass


class ProbabilitySumViolation(TreeError):
    pass


class DanglingChild(TreeError):
    pass


class LeafAtWrongStage(TreeError):
    pass


class NonIncreasingDates(TreeError):
    pass


class UnknownNode(DynkinError, LookupError):
    pass


class StageOutOfRange(DynkinError, ValueError):
    pass


# --- strategies ------------------------------------------------------------


class ScheduleError(DynkinError, ValueError):
    """Exercise schedule violates monotonicity or the boundary conventions."""


class InvalidStoppingTime(DynkinError, ValueError):
    """Node set is not an exact cut, or stops outside the exercise dates."""


class SchemaMismatch(DynkinError, ValueError):
    """Objects built over different trees or schedules were combined."""


class NotMeasurable(DynkinError, ValueError):
    pass


class EnumerationLimitExceeded(DynkinError, RuntimeError):
    pass


# --- evaluation ------------------------------------------------------------


class OrderViolation(DynkinError, ValueError):
    pass


class MissingValues(DynkinError, ValueError):
    pass


class BadGamma(DynkinError, ValueError):
    pass


class BadPrior(DynkinError, ValueError):
    pass


# --- stopping / game -------------------------------------------------------


class MissingPayoff(DynkinError, ValueError):
    pass


class NoConvergence(DynkinError, RuntimeError):
    pass


# --- instance files --------------------------------------------------------


class InstanceParseError(DynkinError, ValueError):
    pass


class InstanceValidationError(DynkinError, ValueError):
    """Instance rejected; ``kind`` is one of A1, A2, tree, schedule, operator, payoff."""

    def __init__(self, kind: str, message: str, nodes: list[int] | None = None):
        self.kind = kind
        self.nodes = sorted(nodes or [])
        detail = f" (nodes: {self.nodes})" if self.nodes else ""
        super().__init__(f"[{kind}] {message}{detail}")


class BadDimensions(DynkinError, ValueError):
    pass
