"""Build hook for the optional compiled stencil kernels.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the per-step linear-solve matvecs
faster on larger grids.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "kwc.backends._stencil",
                ["src/kwc/backends/_stencil.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
