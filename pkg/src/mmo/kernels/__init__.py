"""Loss-kernel backends: compiled extension when available, NumPy otherwise.

The backend is selected once at import time.  Set ``MMO_BACKEND=python`` or
``MMO_BACKEND=compiled`` to force a choice (``compiled`` raises if the
extension was not built); the default ``auto`` prefers the extension.
"""

import os

from . import reference

_requested = os.environ.get("MMO_BACKEND", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"MMO_BACKEND must be auto|compiled|python, got {_requested!r}")

_compiled = None
if _requested in ("auto", "compiled"):
    try:
        from . import _speedups as _compiled
    except ImportError:
        if _requested == "compiled":
            raise
        _compiled = None

if _compiled is not None:
    _active = _compiled
    BACKEND = "compiled"
else:
    _active = reference
    BACKEND = "python"


def backend_name() -> str:
    """Name of the backend selected at import time."""
    return BACKEND


def available_backends() -> tuple[str, ...]:
    names = ["python"]
    if _compiled is not None or _try_compiled() is not None:
        names.insert(0, "compiled")
    return tuple(names)


def _try_compiled():
    global _compiled
    if _compiled is None:
        try:
            from . import _speedups as _compiled
        except ImportError:
            return None
    return _compiled


def get_backend(name: str):
    """Return a backend module by name (for benchmarking/testing)."""
    if name == "python":
        return reference
    if name == "compiled":
        mod = _try_compiled()
        if mod is None:
            raise ImportError("compiled kernel extension is not available")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def batch_loss_grad(cp, cm, scores, tau):
    """Factorized surrogate loss and gradient for a batch (active backend)."""
    return _active.batch_loss_grad(cp, cm, scores, tau)
