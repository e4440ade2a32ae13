"""Build script for the compiled simulation core.

The package is fully functional without the extension (a pure-Python engine
with identical semantics is selected at import time); the extension exists
because the per-event loop dominates runtime for large populations. Set
VIROVEC_NO_EXT=1 to skip building it.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("VIROVEC_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "virovec._engine_cy",
                sources=["src/virovec/_engine_cy.pyx"],
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
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
