"""Build hook for the optional compiled kernels.

The package works without them; a failed compile falls back to numpy.
"""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, Cython missing, ...
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc})")


def extensions():
    if os.environ.get("LCWRA_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    ext = Extension(
        "lcwra._ckernels",
        ["src/lcwra/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
