"""Build the optional Cython kernels; the package falls back to numpy without them."""
import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("DCACAL_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [Extension("dcacal._kernels", ["src/dcacal/_kernels.pyx"], extra_compile_args=["-O3"])],
            language_level="3",
            compiler_directives=dict(
                boundscheck=False,
                wraparound=False,
                cdivision=True,
                initializedcheck=False,
            ),
        )

setup(ext_modules=ext_modules)
