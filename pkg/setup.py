"""Build script for the optional compiled successor kernel.

The package works without the extension (a pure-Python kernel with the same
interface is selected at import time); building it just makes exploration much
faster.  `pip install -e . --no-build-isolation` compiles it when Cython is
available.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("tocheck._ckernel", ["src/tocheck/_ckernel.pyx"])],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
        },
    )

setup(ext_modules=ext_modules)
