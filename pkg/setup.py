"""Build script: compiles the optional Cython stepper kernel.

The package is fully functional without the extension (a pure-Python
stepper is selected at import time), so any build failure of the
extension degrades to a source-only install instead of aborting.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "spinpair.geodesic._stepper_c",
                sources=["src/spinpair/geodesic/_stepper_c.pyx"],
                # no -ffast-math, and no sin+cos -> sincos fusion: the
                # kernel must round identically to the pure-Python
                # fallback, which calls libm sin and cos separately
                extra_compile_args=["-O2", "-fno-builtin-sin", "-fno-builtin-cos"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
