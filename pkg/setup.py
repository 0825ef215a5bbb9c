"""Build script: compiles the optional Cython sweep kernel.

The package is fully functional without the extension (a pure-Python twin
of the kernel is selected at import time), so a missing compiler or Cython
only costs speed.  Set STVC_NO_EXTENSION=1 to skip the build explicitly.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("STVC_NO_EXTENSION") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        # random_standard_normal / random_standard_gamma live in numpy's
        # static npyrandom library, not in the Python extension modules.
        npyrandom_dir = os.path.join(os.path.dirname(np.__file__), "random", "lib")
        ext_modules = cythonize(
            [
                Extension(
                    "stvc._kernels._csweep",
                    ["src/stvc/_kernels/_csweep.pyx"],
                    include_dirs=[np.get_include()],
                    library_dirs=[npyrandom_dir],
                    libraries=["npyrandom"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
