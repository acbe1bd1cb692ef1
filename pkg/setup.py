import numpy
from setuptools import Extension, setup

# The compiled kernel is optional: if the build fails (no compiler, no
# Cython), the package falls back to the pure-numpy implementation in
# ratecast.kernels._pycore, selected at import time.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ratecast.kernels._fastcore",
                ["src/ratecast/kernels/_fastcore.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
