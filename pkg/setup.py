"""Build script for the optional compiled kernels.

The package works without the extension: ``vpaw3d.kernels`` falls back to
the numpy implementation when ``vpaw3d._kernels`` cannot be imported.
Set ``VPAW3D_NO_EXT=1`` to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("VPAW3D_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "vpaw3d._kernels",
                    ["src/vpaw3d/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
