"""Build the optional Cython kernels.

The package works without them; ``omnirelay._backend`` falls back to the
vectorized numpy implementation when the extension is missing.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("OMNIRELAY_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "omnirelay._kernels",
                    ["src/omnirelay/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
