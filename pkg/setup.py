"""Build the optional compiled integrator; the package works without it."""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("POLYRADIAL_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "polyradial._integrate",
                    ["src/polyradial/_integrate.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )

setup(ext_modules=ext_modules)
