"""Kernel backend selection.

Two interchangeable implementations of the hot numeric kernels exist:
``zbcae._kernels_numba`` (loop kernels under ``@njit``) and
``zbcae._kernels_numpy`` (vectorized fallback). The active one is chosen by
the ``ZBCAE_BACKEND`` environment variable:

    ZBCAE_BACKEND=auto    use numba when importable, else numpy (default)
    ZBCAE_BACKEND=numba   require numba, fail loudly if missing
    ZBCAE_BACKEND=numpy   force the pure-numpy path

``set_backend``/``use_backend`` override the choice at runtime (tests and
the kernel benchmark switch back and forth with them).
"""

import contextlib
import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_VALID = ("auto", "numba", "numpy")

_active = None


def _resolve(name):
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}, expected one of {_VALID}")
    if name == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("ZBCAE_BACKEND=numba but numba is not importable")
    return name


def active_backend():
    """Name of the backend currently in use ('numba' or 'numpy')."""
    global _active
    if _active is None:
        _active = _resolve(os.environ.get("ZBCAE_BACKEND", "auto").lower())
    return _active


def set_backend(name):
    """Select the kernel backend ('auto', 'numba' or 'numpy')."""
    global _active
    _active = _resolve(name)


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch the kernel backend."""
    global _active
    prev = active_backend()
    set_backend(name)
    try:
        yield
    finally:
        _active = prev


def kernels():
    """Module implementing the hot kernels for the active backend."""
    if active_backend() == "numba":
        from zbcae import _kernels_numba

        return _kernels_numba
    from zbcae import _kernels_numpy

    return _kernels_numpy
