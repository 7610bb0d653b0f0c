"""Build script for the optional compiled kernels."""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("MODELRISK_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("modelrisk._kernels._ckernels", ["src/modelrisk/_kernels/_ckernels.pyx"],
                       include_dirs=[np.get_include()], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
