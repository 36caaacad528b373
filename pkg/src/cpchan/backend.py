"""Compute-backend selection.

Hot loops ship in two functionally identical implementations: jit-compiled
kernels (numba) and a plain numpy fallback.  The active backend is chosen
once per process from the ``CPCHAN_BACKEND`` environment variable:

* unset or ``"numba"``: use the jit kernels when numba imports cleanly,
  otherwise fall back to numpy;
* ``"numpy"``: force the fallback.

``cpchan backend-bench`` times both implementations side by side.
"""

from __future__ import annotations

import os

from .exceptions import ConfigError

_ENV_VAR = "CPCHAN_BACKEND"
_VALID = ("numba", "numpy")

try:
    import numba  # noqa: F401

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _HAVE_NUMBA = False

_active: str | None = None


def numba_available() -> bool:
    return _HAVE_NUMBA


def backend_name() -> str:
    """Name of the active backend, resolving the environment on first use."""
    global _active
    if _active is None:
        requested = os.environ.get(_ENV_VAR, "").strip().lower()
        if requested and requested not in _VALID:
            raise ConfigError(
                f"{_ENV_VAR} must be one of {_VALID}, got {requested!r}"
            )
        if requested == "numpy":
            _active = "numpy"
        else:
            _active = "numba" if _HAVE_NUMBA else "numpy"
    return _active


def set_backend(name: str | None) -> None:
    """Override the backend for this process; None re-reads the environment."""
    global _active
    if name is not None and name not in _VALID:
        raise ConfigError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not _HAVE_NUMBA:
        raise ConfigError("numba backend requested but numba is not importable")
    _active = name
