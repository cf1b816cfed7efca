"""Stacked coarse-to-fine unpaired image translation on a numpy autodiff engine.

Kept import-light on purpose: the command-line entry point pins BLAS thread
counts before numpy loads, so this module must not import numpy itself.
Submodules (``engine``, ``networks``, ``scan``, ``toydata``, ``metrics``) are
imported lazily on attribute access.
"""

import importlib

__version__ = "0.1.0"

_SUBMODULES = ("engine", "networks", "scan", "toydata", "metrics", "config", "errors")


def __getattr__(name):
    if name in _SUBMODULES:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + list(_SUBMODULES))
