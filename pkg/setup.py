"""Builds the optional compiled enumeration kernel; the package works without it."""
from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    pass
else:
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("causal_diagrams._kernels", ["src/causal_diagrams/_kernels.pyx"],
                   include_dirs=[np.get_include()])],
        compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False},
        quiet=True,
    )

setup(ext_modules=ext_modules)
