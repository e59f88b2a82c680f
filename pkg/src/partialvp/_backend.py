"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
``PARTIALVP_BACKEND=python`` forces the fallback, ``=cython`` makes a missing
extension an import error.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available():
    return sorted(_BACKENDS)


def get(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ImportError(f"kernel backend {name!r} unavailable; have {available()}") from None


def _select():
    requested = os.environ.get("PARTIALVP_BACKEND", "auto").lower()
    if requested == "auto":
        return "cython" if _compiled is not None else "python"
    get(requested)
    return requested


NAME = _select()
coulomb_field = _BACKENDS[NAME].coulomb_field
