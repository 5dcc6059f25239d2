import numpy
from setuptools import Extension, setup

# The compiled split-search kernel is optional: without Cython (or a working
# compiler) the package installs pure-Python and falls back to the numpy
# kernel at import time.  -ffp-contract=off keeps the C arithmetic bit-exact
# with the numpy fallback (no FMA contraction).
ext = Extension(
    "breakoutcast._kernels._split_cy",
    ["src/breakoutcast/_kernels/_split_cy.pyx"],
    include_dirs=[numpy.get_include()],
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

try:
    from Cython.Build import cythonize

    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
