"""Hot loops, taken from the compiled extension when it is available.

``BACKEND`` is "cython" when ``funceq._kernels`` imports, else "python".
Setting FE_PURE_PYTHON=1 forces the numpy fallback.
"""

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("FE_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from . import _kernels as _compiled
    BACKEND = "cython"
except ImportError:
    _compiled = None
    BACKEND = "python"


def residual_and_scale(F, Fp, backend=None):
    use = backend or BACKEND
    if use == "cython" and _compiled is not None and not np.iscomplexobj(F) \
            and not np.iscomplexobj(Fp):
        return _compiled.residual_and_scale(np.ascontiguousarray(F, dtype=float),
                                            np.ascontiguousarray(Fp, dtype=float))
    return _kernels_py.residual_and_scale(F, Fp)


def rs_gradients(x, p, F, Fp, backend=None):
    use = backend or BACKEND
    if use == "cython" and _compiled is not None:
        return _compiled.rs_gradients(np.ascontiguousarray(x, dtype=float),
                                      np.ascontiguousarray(p, dtype=float),
                                      np.ascontiguousarray(F, dtype=float),
                                      np.ascontiguousarray(Fp, dtype=float))
    return _kernels_py.rs_gradients(x, p, F, Fp)
