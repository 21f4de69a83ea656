import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The compiled kernels are an optimization, not a requirement: the package
# falls back to the numpy reference implementation if the import fails.
extensions = [
    Extension(
        "simplexfield.kernels._native",
        ["src/simplexfield/kernels/_native.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
