"""Exception types raised across the package."""


class NestedBanditsError(Exception):
    """Base class for all package errors."""


class NonNestedPartition(NestedBanditsError):
    """A node's level is not its parent's level + 1."""


class EmptyClass(NestedBanditsError):
    """An internal node (level < L) has no children."""


class RangeNormalizationViolated(NestedBanditsError):
    """Some root-to-leaf path has range sum > 1 (beyond tolerance)."""


class NoLeaves(NestedBanditsError):
    """The tree spec produces no leaf nodes."""


class UnknownClass(NestedBanditsError):
    """A class id does not name a node of the tree."""


class NonFiniteScore(NestedBanditsError):
    """A propensity score is NaN or infinite."""


class RootHasNoParent(NestedBanditsError):
    """Conditional probability requested for the root."""


class ZeroProbabilityArm(NestedBanditsError):
    """Importance weighting attempted on an arm with zero probability."""


class PathProbabilityZero(NestedBanditsError):
    """A sampled path carries a zero prefix probability."""


class MissingIncrement(NestedBanditsError):
    """Observed increments do not cover every class on the sampled path."""


class TooLargeToEnumerate(NestedBanditsError):
    """Exact expectation requested on a tree too large for path enumeration."""


class StaleFeedback(NestedBanditsError):
    """feedback() called without a pending choose()."""


class PendingFeedback(NestedBanditsError):
    """choose() called twice without an intervening feedback()."""


class ScriptExhausted(NestedBanditsError):
    """A scripted environment was stepped past its final round."""


class RangeViolationInScript(NestedBanditsError):
    """A scripted increment falls outside [0, R_C]."""


class ConfigError(NestedBanditsError):
    """An experiment config file could not be parsed or validated."""
