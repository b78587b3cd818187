"""Builds the optional compiled kernels. Without Cython or a compiler the
package installs anyway and uses the numpy fallback."""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "wardenvc._kernels",
                ["src/wardenvc/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
        quiet=True,
    )
except Exception:  # pragma: no cover
    ext_modules = []

setup(ext_modules=ext_modules)
