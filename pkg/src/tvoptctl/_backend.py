"""Backend selection: compiled extension kernels with pure-NumPy fallback.

The extension module accelerates the closed-loop derivative function for
the built-in plant/objective pairs (orders k = 1, 2).  It is selected at
import when available.  The TVOPT_BACKEND environment variable overrides
any in-code preference: "pure" forces the fallback, "compiled" requires
the extension, "auto" (default) picks the extension when present.
"""
from __future__ import annotations

import os

from .errors import ConfigError

try:
    from . import _speedups
    HAVE_COMPILED = True
except ImportError:  # build without a compiler, or source checkout
    _speedups = None
    HAVE_COMPILED = False

_VALID = ("auto", "pure", "compiled")


def selected_backend(preference: str = "auto") -> str:
    """Resolve the backend name from a preference and the environment."""
    env = os.environ.get("TVOPT_BACKEND", "").strip().lower()
    choice = env or (preference or "auto").strip().lower()
    if choice not in _VALID:
        raise ConfigError(f"unknown backend {choice!r}; expected one of {_VALID}")
    if choice == "auto":
        return "compiled" if HAVE_COMPILED else "pure"
    return choice


def make_rhs(plant, objective, gains, preference: str = "auto"):
    """Compiled closed-loop RHS for supported setups.

    Returns None when the pure path should be used.  Raises ConfigError if
    the compiled backend was explicitly demanded but cannot serve.
    """
    resolved = selected_backend(preference)
    demanded = resolved == "compiled" and (
        os.environ.get("TVOPT_BACKEND", "").strip().lower() == "compiled"
        or (preference or "").strip().lower() == "compiled")
    if resolved == "pure":
        return None
    if not HAVE_COMPILED:
        if demanded:
            raise ConfigError("compiled backend requested but the extension is not built")
        return None
    rhs = _speedups.make_rhs(plant, objective, gains)
    if rhs is None and demanded:
        raise ConfigError(
            "compiled backend requested but this plant/objective/gain "
            "combination is not covered by the extension")
    return rhs
