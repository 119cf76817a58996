"""Kernel backend selection.

Two interchangeable backends provide the hot matmul kernels:

* ``compiled`` — the Cython extension (fixed naive-order accumulation).
* ``numpy``    — BLAS-backed fallback, always available.

The compiled backend is preferred when the extension imported successfully.
``SLIMVIT_KERNELS`` overrides the choice at process start, and
:func:`use_backend` switches at runtime (used by the benchmark and tests).
Both backends satisfy the same contracts; see the module docstrings of
``_kernels``/``_kernels_py`` for the exact accumulation semantics.
"""

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"numpy": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select the active kernel backend ("compiled" or "numpy")."""
    global _active, _active_name
    if name not in _BACKENDS:
        raise ConfigError(
            f"kernel backend {name!r} not available (have: {available_backends()})"
        )
    _active = _BACKENDS[name]
    _active_name = name


def current_backend():
    return _active_name


_active = None
_active_name = None
use_backend(os.environ.get("SLIMVIT_KERNELS", "compiled" if _compiled else "numpy"))


def matmul_f32(a, b):
    return _active.matmul_f32(a, b)


def matmul_i8_i32(a, b):
    return _active.matmul_i8_i32(a, b)
