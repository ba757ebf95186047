import os

from setuptools import setup

ext_modules = []
if os.environ.get("FRAMEPOST_NO_EXT", "") in ("", "0"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "framepost._kernels",
                    ["src/framepost/_kernels.pyx"],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # numpy fallback in framepost._kernels_py is used at runtime
        ext_modules = []

setup(ext_modules=ext_modules)
