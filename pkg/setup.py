"""Build script: compiles the optional fast kernel extension.

The package works without the extension (a numpy fallback is selected at
import time), so a failing C build degrades to a pure build instead of
aborting the install.
"""

import sys

from setuptools import setup

try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    extensions = cythonize(
        [
            Extension(
                "narrowops.kernels._fast",
                ["src/narrowops/kernels/_fast.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"narrowops: skipping fast kernels ({exc}); pure backend will be used", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
