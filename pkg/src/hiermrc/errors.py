"""Exception hierarchy shared by every module."""

from __future__ import annotations


class HierMrcError(Exception):
    """Base class for all library errors."""


class SupportViolation(HierMrcError, ValueError):
    """A symbol carries target mass where the reference measure has none."""


class ZeroBlockMass(HierMrcError, ValueError):
    """Conditioning on a block that has zero probability."""


class DegenerateWeights(HierMrcError, ValueError):
    """Every importance ratio in a proposal list is zero (tau == 0)."""


class IndexOutOfRange(HierMrcError, IndexError):
    """A transmitted index does not address a proposal."""


class RejectionCapExceeded(HierMrcError, RuntimeError):
    """Rejection sampling consumed more raw draws than allowed."""

    def __init__(self, message: str, *, block: int | None = None,
                 label: str | None = None, seed: int | None = None):
        super().__init__(message)
        self.block = block
        self.label = label
        self.seed = seed


class InfeasibleEnumeration(HierMrcError, ValueError):
    """An exact oracle would need more summands than its ceiling."""

    def __init__(self, message: str, *, size: float | None = None,
                 ceiling: float | None = None):
        super().__init__(message)
        self.size = size
        self.ceiling = ceiling


class BlockTargetMismatch(HierMrcError, ValueError):
    """Decoder targets disagree on the shared block marginal."""


class MismatchedScenario(HierMrcError, ValueError):
    """Two reports cannot be compared because their scenarios differ."""


class ScenarioError(HierMrcError, ValueError):
    """A scenario file violates one of its invariants."""
