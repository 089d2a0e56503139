"""Backend selection for the hot elementwise kernels.

The compiled Cython module is used when importable; set ``NLCCA_PURE_PYTHON=1``
to force the numpy fallback.  ``BACKEND`` names the active implementation.
"""
import os

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("NLCCA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _contiguous(fn):
    def call(*args):
        return fn(*(np.ascontiguousarray(a) if isinstance(a, np.ndarray) else a for a in args))

    call.__name__ = fn.__name__
    call.__doc__ = fn.__doc__
    return call


if _compiled is not None:
    bn_leaky_forward = _contiguous(_compiled.bn_leaky_forward)
    bn_leaky_backward = _contiguous(_compiled.bn_leaky_backward)
    affine_leaky = _contiguous(_compiled.affine_leaky)
    leaky = _contiguous(_compiled.leaky)
    hermite_table = _compiled.hermite_table
else:
    bn_leaky_forward = _kernels_py.bn_leaky_forward
    bn_leaky_backward = _kernels_py.bn_leaky_backward
    affine_leaky = _kernels_py.affine_leaky
    leaky = _kernels_py.leaky
    hermite_table = _kernels_py.hermite_table


def compiled_module():
    """The compiled module, or ``None`` if the extension is unavailable."""
    return _compiled
