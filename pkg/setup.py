"""Build script: compiles the optional Cython fill kernel.

The package is fully functional without the extension (a vectorized numpy
fallback is selected at import time), so any failure here is non-fatal.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("INCOMMPW_NO_EXTENSION") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "incommpw._kernels",
                    ["src/incommpw/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except Exception as exc:  # pragma: no cover - build-environment dependent
        print(f"incommpw: skipping compiled kernel ({exc}); pure-numpy fallback will be used")

setup(ext_modules=ext_modules)
