"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the NumPy
fallback.  ``JELLY_BACKEND=python`` forces the fallback (``cython`` makes a
missing extension an error instead of a silent fallback).
"""

import contextlib
import importlib
import os

from . import _kernels_py

_choice = os.environ.get("JELLY_BACKEND", "auto").lower()

if _choice == "python":
    kernels = _kernels_py
else:
    try:
        kernels = importlib.import_module("jellysonar.nnkit._kernels")
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _kernels_py

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Kernel module by name (``"python"``/``"cython"``), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("jellysonar.nnkit._kernels")
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        importlib.import_module("jellysonar.nnkit._kernels")
        names.append("cython")
    except ImportError:
        pass
    return names


@contextlib.contextmanager
def use_backend(name):
    """Temporarily route every layer through the named kernel backend."""
    global kernels
    prev = kernels
    kernels = get_kernels(name)
    try:
        yield kernels
    finally:
        kernels = prev
