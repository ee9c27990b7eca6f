import numpy as np
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        Extension(
            "geotess._kernels",
            ["src/geotess/_kernels.pyx"],
            include_dirs=[np.get_include()],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            extra_compile_args=["-O3", "-ffp-contract=off"],
        ),
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # no Cython: install the pure-Python fallback only
    ext_modules = []

setup(ext_modules=ext_modules)
