import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "yieldnet.kernels._fastk",
                ["src/yieldnet/kernels/_fastk.pyx"],
                extra_compile_args=["-O3"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # source install without Cython: the pure-numpy kernel lane is used
    ext_modules = []

setup(ext_modules=ext_modules)
