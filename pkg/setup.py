import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "gcr._kernels",
    ["src/gcr/_kernels.pyx"],
    include_dirs=[numpy.get_include()],
    # no fused multiply-add: keeps results bit-identical to the numpy fallback
    extra_compile_args=["-O3", "-ffp-contract=off"],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize([ext], language_level=3))
