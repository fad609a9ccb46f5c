"""Kernel backend selection.

Set ``FINPOP_BACKEND=numpy`` to force the pure-numpy kernels, e.g. for
debugging or on platforms without numba. Any other value (or unset) uses
numba when it can be imported.
"""

import os

_requested = os.environ.get("FINPOP_BACKEND", "numba").strip().lower()

if _requested == "numpy":
    BACKEND = "numpy"
else:
    try:
        import numba  # noqa: F401

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        BACKEND = "numpy"
