from setuptools import setup, Extension
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Build the compiled core if possible; the pure-python fallback is used otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler / cython
            print(f"warning: compiled core not built ({exc}); falling back to pure python")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); falling back to pure python")


ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("timerkit._core", ["src/timerkit/_core.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("warning: Cython not available; building without the compiled core")

setup(
    ext_modules=ext_modules,
    cmdclass={"build_ext": optional_build_ext},
)
