"""Build script: compiles the communication-cost kernel when Cython and a
C compiler are available.  The package falls back to the pure-Python
kernel at import time if the extension is missing, so the build never
hard-fails on the extension."""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mmtplan._speedups",
                ["src/mmtplan/_speedups.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
