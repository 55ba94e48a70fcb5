"""Preferential subspace identification with filtering and smoothing."""

from ._core import *  # noqa: F401,F403
from ._core import PsidError  # noqa: F401

__version__ = "0.1.0"
