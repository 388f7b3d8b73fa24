"""Pick the Volterra stepping backend at import time.

The compiled extension is used when it imports; ``DMDRATE_PURE_PYTHON=1``
forces the numpy fallback.
"""

import os

from . import _volterra_py

NAME = "python"
population = _volterra_py.population
matrix = _volterra_py.matrix

if os.environ.get("DMDRATE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _volterra
    except ImportError:
        pass
    else:
        NAME = "cython"
        population = _volterra.population
        matrix = _volterra.matrix


def get(name=None):
    """``(population, matrix)`` for ``name`` in {"cython", "python"} or the default."""
    if name is None:
        return population, matrix
    if name == "python":
        return _volterra_py.population, _volterra_py.matrix
    if name == "cython":
        from . import _volterra
        return _volterra.population, _volterra.matrix
    raise ValueError(f"unknown backend {name!r}")


def available():
    out = ["python"]
    try:
        from . import _volterra  # noqa: F401
    except ImportError:
        return out
    return ["cython"] + out
