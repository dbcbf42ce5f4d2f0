"""Build script for the optional compiled kernels.

The package works without them; ``ppadf.kernels`` falls back to the numpy
implementation when ``ppadf._core`` cannot be imported.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PPADF_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "ppadf._core",
                    ["src/ppadf/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
