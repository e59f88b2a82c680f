import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -fno-math-errno lets sqrt vectorise; FP semantics are otherwise strict
# (Kahan sums rely on it). PARTIALVP_PORTABLE=1 drops -march=native.
flags = ["-O3", "-fno-math-errno"]
if not os.environ.get("PARTIALVP_PORTABLE"):
    flags += ["-march=native", "-mprefer-vector-width=512"]

extensions = [
    Extension(
        "partialvp._kernels",
        ["src/partialvp/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=flags,
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
