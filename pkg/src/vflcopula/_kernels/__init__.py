"""Kernel backend selection.

The compiled extension is preferred when importable; set
``VFLCOPULA_BACKEND=fallback`` (or ``compiled``) to force a choice.  Both
backends expose the same functions with identical numerics.
"""

from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("VFLCOPULA_BACKEND", "auto").lower()

if _choice == "fallback":
    _impl = _fallback
elif _choice == "compiled":
    from . import _corex as _impl
else:
    try:
        from . import _corex as _impl
    except ImportError:
        _impl = _fallback

BACKEND = _impl.BACKEND_NAME

norm_cdf = _impl.norm_cdf
norm_sf = _impl.norm_sf
norm_ppf = _impl.norm_ppf
truncated_normal_draw = _impl.truncated_normal_draw
adjust_column = _impl.adjust_column
rr_chunk = _impl.rr_chunk
count_inversions = _impl.count_inversions
cd_quadratic_l1 = _impl.cd_quadratic_l1


def get_backend(name: str):
    """Return a specific backend module ("compiled" or "fallback")."""
    if name == "fallback":
        return _fallback
    if name == "compiled":
        from . import _corex

        return _corex
    raise ValueError(f"unknown backend {name!r}")
