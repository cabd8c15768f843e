"""Hot-kernel backend selection.

Tries the compiled extension first and falls back to numpy. Set
GENCLUST_KERNELS=numpy (or =cython) to force a backend; forcing cython when
the extension is missing raises at import so misconfigured benchmarks fail
loudly instead of silently measuring the fallback.
"""

import os

from . import _pykern

_forced = os.environ.get("GENCLUST_KERNELS", "").lower()

if _forced == "numpy":
    _impl = _pykern
    BACKEND = "numpy"
else:
    try:
        from . import _ckern as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _pykern
        BACKEND = "numpy"

pairwise_sqdist = _impl.pairwise_sqdist
assign_min_sqdist = _impl.assign_min_sqdist
mbd_forward = _impl.mbd_forward
mbd_backward = _impl.mbd_backward


def get_backend() -> str:
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return BACKEND
