import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python install: the numpy fallback kernels are used instead.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "patchfield.ops._kernels",
                ["src/patchfield/ops/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off keeps the compiled kernels bit-compatible
                # with the numpy fallback (no FMA re-rounding).
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
