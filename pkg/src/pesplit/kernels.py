"""Backend selection for the hot kernels.

The compiled extension ``pesplit._kernels`` is used when it was built;
otherwise the NumPy fallback is used. Set ``PESPLIT_BACKEND=python`` to force
the fallback or ``PESPLIT_BACKEND=cython`` to fail loudly if the extension
is missing.
"""

import os

from . import _kernels_py

OK = _kernels_py.OK
BLOWUP = _kernels_py.BLOWUP
NO_CONVERGENCE = _kernels_py.NO_CONVERGENCE


def _load_compiled():
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
_requested = os.environ.get("PESPLIT_BACKEND", "auto").lower()

if _requested == "python":
    _active = _kernels_py
elif _requested == "cython":
    if _compiled is None:
        raise ImportError("PESPLIT_BACKEND=cython but pesplit._kernels is not built")
    _active = _compiled
elif _requested == "auto":
    _active = _compiled if _compiled is not None else _kernels_py
else:
    raise ImportError(f"unknown PESPLIT_BACKEND={_requested!r}")

BACKEND = "cython" if _active is _compiled and _compiled is not None else "python"


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name):
    if name == "python":
        return _kernels_py
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"backend {name!r} not available")


def nonlinear(cu, cv, tr):
    return _active.nonlinear(cu, cv, tr)


def advance(*args, **kwargs):
    return _active.advance(*args, **kwargs)
