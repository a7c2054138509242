"""Backend selection for the hot loops.

The compiled Cython module is used when it was built; otherwise (or when
``THUNDER_PURE_PYTHON=1`` is set) the numpy implementations are used.
Both expose ``im2col``, ``col2im``, ``haar_forward`` and ``haar_inverse``
writing into caller-allocated C-contiguous buffers.
"""

import os

from . import _numpy_kernels

_compiled = None
if not os.environ.get("THUNDER_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _compiled = None

_active = _compiled if _compiled is not None else _numpy_kernels
BACKEND = "cython" if _compiled is not None else "numpy"


def available_backends():
    names = ["numpy"]
    if _compiled is not None:
        names.append("cython")
    return names


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return _active
    if name == "numpy":
        return _numpy_kernels
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def set_backend(name):
    global _active, BACKEND
    _active = get_backend(name)
    BACKEND = name


def im2col(x, out, kh, kw, stride, pad):
    _active.im2col(x, out, kh, kw, stride, pad)


def col2im(cols, out, kh, kw, stride, pad):
    _active.col2im(cols, out, kh, kw, stride, pad)


def haar_forward(x, out):
    _active.haar_forward(x, out)


def haar_inverse(y, out):
    _active.haar_inverse(y, out)
