"""Build script for the compiled rasterizer kernels.

The package works without the extension (a NumPy fallback is selected at
import time), but the compiled kernels are roughly an order of magnitude
faster on the per-pixel compositing loops.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "splat4d.raster._kernels",
        ["src/splat4d/raster/_kernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
