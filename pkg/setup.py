"""Build script: compiles the optional Cython kernel core.

The package works without the extension (a pure-numpy fallback is selected
at import time), so a failed extension build only disables the fast path.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to the pure-Python fallback if the extension cannot build."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any build failure is non-fatal
            print(f"warning: compiled kernels unavailable ({exc}); "
                  "stackrl will use the pure-numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: failed to build {ext.name} ({exc}); "
                  "stackrl will use the pure-numpy fallback")


try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "stackrl._kernels._core",
                ["src/stackrl/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": optional_build_ext})
