import os

from setuptools import Extension, setup

# The compiled kernel is optional: if Cython (or a C compiler) is not
# available the package installs pure-Python only and hllrt._kernel falls
# back at import time. Set HLLRT_PURE_BUILD=1 to skip the extension on
# purpose (useful for benchmarking the fallback).
ext_modules = []
if not os.environ.get("HLLRT_PURE_BUILD"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "hllrt._kernel._ckernel",
                    ["src/hllrt/_kernel/_ckernel.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
