"""Builds the optional compiled kernels; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("SAVER_LAB_NO_EXT") != "1":
    try:
        import numpy  # noqa: F401  (build requirement)
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "saver_lab._kernels",
                    ["src/saver_lab/_kernels.pyx"],
                    # keep a*b+c unfused so results match the Python twin bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
