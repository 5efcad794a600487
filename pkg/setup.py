"""Build script for the optional compiled kernels.

The package works without the extension: segauction._kernels falls back to
a pure-numpy implementation when the compiled module is absent.  Set
SEGAUCTION_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("SEGAUCTION_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "segauction._kernels._speedups",
                    ["src/segauction/_kernels/_speedups.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        # No Cython around: ship the fallback only.
        ext_modules = []

setup(ext_modules=ext_modules)
