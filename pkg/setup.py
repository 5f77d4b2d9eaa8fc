from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mmp._kernels._native",
                ["src/mmp/_kernels/_native.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install without the compiled kernel, the pure-numpy
    # fallback is selected at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
