"""Hierarchical minimal random coding over finite alphabets.

Modules: ``dist`` (distributions and divergences), ``common_info``
(Gacs-Korner blocks), ``randomness`` (shared SplitMix64 streams),
``mrc`` and ``hier`` (the samplers), ``protocol`` (broadcast/unicast
runs), ``bounds`` (closed-form guarantees), ``oracles`` (exact
reference laws) and ``cli``.
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import BACKEND
from .common_info import GkDecomposition, gk_decompose, verify_common_variable
from .dist import (
    Alphabet,
    JointPmf,
    Partition,
    Pmf,
    block_marginal,
    chi_square,
    condition_on_block,
    entropy,
    kl,
    marginals,
    tv,
)
from .errors import (
    BlockTargetMismatch,
    DegenerateWeights,
    HierMrcError,
    IndexOutOfRange,
    InfeasibleEnumeration,
    MismatchedScenario,
    RejectionCapExceeded,
    ScenarioError,
    SupportViolation,
    ZeroBlockMass,
)
from .randomness import SharedStream, StreamSeed, derive

__all__ = [
    "BACKEND",
    "Alphabet",
    "BlockTargetMismatch",
    "DegenerateWeights",
    "GkDecomposition",
    "HierMrcError",
    "IndexOutOfRange",
    "InfeasibleEnumeration",
    "JointPmf",
    "MismatchedScenario",
    "Partition",
    "Pmf",
    "RejectionCapExceeded",
    "ScenarioError",
    "SharedStream",
    "StreamSeed",
    "SupportViolation",
    "ZeroBlockMass",
    "__version__",
    "block_marginal",
    "chi_square",
    "condition_on_block",
    "derive",
    "entropy",
    "gk_decompose",
    "kl",
    "marginals",
    "tv",
    "verify_common_variable",
]
