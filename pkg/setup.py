"""Build script: compiles the optional stepping kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any compilation failure downgrades to a warning
instead of aborting the install.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


def make_extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError as exc:
        print(f"stosh: compiled kernels disabled ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "stosh._core",
        sources=["src/stosh/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], compiler_directives={"language_level": 3})


class optional_build_ext(build_ext):
    """Allow the extension build to fail without failing the install."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:
            print(f"stosh: extension build failed, using the pure-python "
                  f"backend ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"stosh: building {ext.name} failed, using the pure-python "
                  f"backend ({exc})", file=sys.stderr)


setup(
    ext_modules=make_extensions(),
    cmdclass={"build_ext": optional_build_ext},
)
