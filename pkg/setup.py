"""Build script: compiles the optional C accelerator for the wire kernels.

The package is pure Python; ``icmpstamp._speedups`` is a drop-in C twin of
``icmpstamp._kernels_py`` that ``wire.py`` prefers at import time.  If Cython
or a C compiler is unavailable the build quietly skips the extension and the
pure-Python kernels are used instead.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Never fail the install because the accelerator would not compile."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, headers missing, ...
            print(f"skipping optional speedups: {exc}")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"skipping optional speedups ({ext.name}): {exc}")


def extensions():
    pyx = os.path.join("src", "icmpstamp", "_speedups.pyx")
    pregenerated = os.path.join("src", "icmpstamp", "_speedups.c")
    try:
        from Cython.Build import cythonize
    except ImportError:
        if os.path.exists(pregenerated):
            return [Extension("icmpstamp._speedups", [pregenerated])]
        return []
    return cythonize(
        [Extension("icmpstamp._speedups", [pyx])],
        compiler_directives={"language_level": "3"},
    )


setup(ext_modules=extensions(), cmdclass={"build_ext": optional_build_ext})
