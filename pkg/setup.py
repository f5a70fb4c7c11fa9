"""Build script: compiles the optional Cython stepping core.

The package is fully functional without the extension (a NumPy fallback is
selected at import time); any compilation failure therefore downgrades to a
pure-Python install instead of aborting.
"""
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            print(f"warning: building the compiled stepping core failed ({exc}); "
                  "falling back to the pure-Python engine")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} failed to compile ({exc}); "
                  "falling back to the pure-Python engine")


ext_modules = []
try:
    import os

    import numpy
    from Cython.Build import cythonize

    if not os.path.exists("src/hitgen/_engine_cy.pyx"):
        raise ImportError("cython source not present")
    ext_modules = cythonize(
        [
            Extension(
                "hitgen._engine_cy",
                ["src/hitgen/_engine_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:
    print(f"warning: cython/numpy unavailable at build time ({exc}); "
          "installing without the compiled stepping core")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
