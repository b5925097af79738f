"""Kernel backend selection.

Set ``JOINTAUCTION_BACKEND=numpy`` to force the pure-numpy fallback path,
``JOINTAUCTION_BACKEND=numba`` to require the jitted kernels, or leave it
unset (``auto``) to use numba when importable.
"""

from __future__ import annotations

import os

_ENV_VAR = "JOINTAUCTION_BACKEND"
_choice = os.environ.get(_ENV_VAR, "auto").strip().lower()

if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(f"{_ENV_VAR} must be auto|numba|numpy, got {_choice!r}")

USE_NUMBA = False
if _choice in ("auto", "numba"):
    try:
        import numba  # noqa: F401

        USE_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
