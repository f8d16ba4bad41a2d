"""Numerical lab for embedded minimal disks: surfaces, multi-valued graphs,
the minimal surface equation on annular covers, and the structure checks."""

from .settings import ARTIFACT_VERSION as __version__

__all__ = ["__version__"]
