"""Closed-form few-photon scattering matrices of chiral waveguide emitters."""

from .core import *  # noqa: F401,F403
from .single_photon import *  # noqa: F401,F403
from .two_photon import *  # noqa: F401,F403
from .coherent import *  # noqa: F401,F403
from . import oracle  # noqa: F401

__version__ = "0.1.0"
