"""Hot loops: SplitMix64 streams, inverse-CDF draws, rejection, enumeration.

The numba backend is used unless ``HIERMRC_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``, or numba cannot be imported. Both
backends produce identical stream outputs.
"""

from __future__ import annotations

import os

from . import _numpy

ENV_FLAG = "HIERMRC_DISABLE_NUMBA"


def _want_numba() -> bool:
    return os.environ.get(ENV_FLAG, "").strip() in ("", "0")


if _want_numba():
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _impl = _numpy
        BACKEND = "numpy"
else:
    _impl = _numpy
    BACKEND = "numpy"

splitmix_u64 = _impl.splitmix_u64
unit_draws = _impl.unit_draws
unit_draws_multi = _impl.unit_draws_multi
categorical_draws = _impl.categorical_draws
categorical_draws_multi = _impl.categorical_draws_multi
rejection_draws = _impl.rejection_draws
enumerate_selection_law = _impl.enumerate_selection_law

__all__ = [
    "BACKEND",
    "ENV_FLAG",
    "categorical_draws",
    "categorical_draws_multi",
    "enumerate_selection_law",
    "rejection_draws",
    "splitmix_u64",
    "unit_draws",
    "unit_draws_multi",
]
