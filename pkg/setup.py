"""Build script.

The compiled kernel module is optional: when Cython (or a C compiler) is
unavailable the package installs without it and falls back to the pure
numpy backend at import time.  Set ETNKIT_NO_EXT=1 to skip the extension
build explicitly.
"""

import os

from setuptools import setup

ext_modules = []
if os.environ.get("ETNKIT_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/etnkit/_ckernels.pyx"],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
