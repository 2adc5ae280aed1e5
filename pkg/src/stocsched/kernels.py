"""Backend selection for the simulation kernels.

The compiled extension is used when it was built; otherwise (or when
``STOCSCHED_PURE_PYTHON=1`` is set) the pure-Python module takes over.  Both
produce identical numbers for identical inputs.
"""

import importlib
import os

from . import _kernels_py
from ._kernels_py import (  # noqa: F401  (re-exported constants)
    KIND_CONSIDER,
    KIND_PRIORITY,
    KIND_UNIFORM,
    KIND_WEIGHTED,
    MODE_BASE,
    MODE_CARDINALITY,
    MODE_DEADLINE,
    MODE_KNAPSACK,
    MODE_KNAPSACK_ANALYSIS,
)


def _load_compiled():
    try:
        return importlib.import_module("stocsched._kernels")
    except ImportError:
        return None


_compiled = _load_compiled()

if _compiled is not None and os.environ.get("STOCSCHED_PURE_PYTHON", "") not in ("1", "true", "yes"):
    BACKEND = "cython"
    _active = _compiled
else:
    BACKEND = "python"
    _active = _kernels_py


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name=None):
    """Kernel module by name (``"cython"`` / ``"python"``); ``None`` gives the active one."""
    if name is None:
        return _active
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
