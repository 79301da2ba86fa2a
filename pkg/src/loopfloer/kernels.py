"""Kernel dispatch: compiled extension when available, numpy fallback otherwise.

Set the environment variable ``LOOPFLOER_KERNELS=python`` to force the
fallback.  ``BACKEND`` names the implementation selected at import time.
"""

from __future__ import annotations

import os

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("LOOPFLOER_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

cyclic_tridiag_solve = _impl.cyclic_tridiag_solve
fourier_terms = _impl.fourier_terms
heat_steps = _impl.heat_steps


def implementations():
    """Mapping name -> kernel module for every importable implementation."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["compiled"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
