import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PHS_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                # no -ffast-math (reassociation) and no FMA contraction:
                # both would break the fixed per-element rounding sequence
                # the bit-exactness tests rely on
                Extension(
                    "phsearch._kernels",
                    ["src/phsearch/_kernels.pyx"],
                    extra_compile_args=["-O3", "-march=native", "-ffp-contract=off"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no Cython at build time: install runs on the numpy fallback backend
        ext_modules = []

setup(ext_modules=ext_modules)
