"""Kernel dispatch: compiled extension when available, numpy otherwise.

``BACKEND`` names the implementation in use. Setting the environment variable
``VPAW3D_PURE_PYTHON=1`` before import forces the numpy fallback.
"""
import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if not os.environ.get("VPAW3D_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None

_impl = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"

sph_bessel = _impl.sph_bessel
screened_coulomb_sum = _impl.screened_coulomb_sum

__all__ = ["BACKEND", "sph_bessel", "screened_coulomb_sum",
           "python_kernels", "compiled_kernels"]
