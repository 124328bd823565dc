"""Numba switch.

Set ``SGVOS_DISABLE_NUMBA=1`` in the environment before import to force the
pure-numpy kernels. Numba is also skipped silently when it is not installed.
"""

import logging
import os

logger = logging.getLogger(__name__)

_disabled = os.environ.get("SGVOS_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _disabled:
        raise ImportError("disabled by SGVOS_DISABLE_NUMBA")
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError as exc:
    logger.debug("numba unavailable, using numpy kernels: %s", exc)
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """No-op stand-in for ``numba.njit``."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap
