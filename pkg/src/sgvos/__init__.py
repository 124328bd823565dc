"""Semantically-guided video object segmentation at desk scale."""

from ._accel import HAVE_NUMBA

__version__ = "0.1.0"
__all__ = ["HAVE_NUMBA", "__version__"]
