"""Build script for the optional compiled gradient kernels.

The package works without the extension (a NumPy fallback is selected at
import time); the extension only accelerates the per-sample forward/backward
inner loop.
"""

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "airfedsim._gradkernels",
                ["src/airfedsim/_gradkernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
except ImportError:
    # No Cython available: install the pure-Python package only.
    extensions = []

setup(ext_modules=extensions)
