"""Build script: compiles the optional tree kernels when Cython is available."""

from setuptools import setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # pure-Python install; the numpy kernels are used
    pass
else:
    ext_modules = cythonize(
        [Extension("localcal.trees._kernels", ["src/localcal/trees/_kernels.pyx"],
                   include_dirs=[np.get_include()], extra_compile_args=["-O3"],
                   define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
