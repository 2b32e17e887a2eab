import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "milbench._kernels._core",
                sources=["src/milbench/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback is selected at import time when the extension
    # is absent, so a cython-less install still works.
    ext_modules = []

setup(ext_modules=ext_modules)
