"""Partial deterministic-mixture multiple importance sampling."""

from ._pdmis import *  # noqa: F401,F403
from ._pdmis import __doc__  # noqa: F401

__version__ = "0.1.0"
