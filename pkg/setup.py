"""Build script for the optional compiled matching kernel.

The package is pure Python except for ``bevground._matchcore``, a small
Cython extension implementing the greedy box-matching inner loop (the only
hot path when evaluating large prediction files). The build is tolerant:
if no compiler (or Cython and no pre-generated C source) is available, the
extension is skipped and the package falls back to the pure-Python kernel
at import time.
"""

import os
import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext
from setuptools.errors import CCompilerError, ExecError, PlatformError

HERE = os.path.abspath(os.path.dirname(__file__))
PYX = os.path.join("src", "bevground", "_matchcore.pyx")
C_SRC = os.path.join("src", "bevground", "_matchcore.c")


def make_extensions():
    try:
        from Cython.Build import cythonize

        return cythonize(
            [Extension("bevground._matchcore", [PYX])],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        if os.path.exists(os.path.join(HERE, C_SRC)):
            return [Extension("bevground._matchcore", [C_SRC])]
        warnings.warn(
            "Cython not available and no pre-generated C source found; "
            "building without the compiled matching kernel."
        )
        return []


class OptionalBuildExt(build_ext):
    """Skip the extension (with a warning) when compilation fails."""

    def run(self):
        try:
            build_ext.run(self)
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as exc:
            warnings.warn(f"Compiled matching kernel skipped: {exc}")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except (CCompilerError, ExecError, PlatformError, FileNotFoundError) as exc:
            warnings.warn(f"Compiled matching kernel skipped: {exc}")


setup(ext_modules=make_extensions(), cmdclass={"build_ext": OptionalBuildExt})
