"""Kernel backend selection.

The compiled extension is preferred; ``ROADFRICTION_PURE=1`` forces the
numpy fallback. ``BACKEND`` names whichever was loaded.
"""

import os

from . import _pykernels

CONVERGED = _pykernels.CONVERGED
STALLED = _pykernels.STALLED
SWEEP_CAP = _pykernels.SWEEP_CAP

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("ROADFRICTION_PURE"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

jacobi_eigh = _impl.jacobi_eigh
smo_solve = _impl.smo_solve
perplexity_search = _impl.perplexity_search


def backends():
    """All importable kernel modules, keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
