"""Builds the _core extension through the project's CMake tree.

The wheel backend is plain setuptools: the extension depends on libtorch and
OpenCV found by CMake, so build_ext delegates to `cmake --build` and copies
the produced module into place.
"""

import shutil
import subprocess
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source = Path(__file__).parent.resolve()
        build_dir = source / "build"
        if not (build_dir / "CMakeCache.txt").exists():
            configure = ["cmake", "-S", str(source), "-B", str(build_dir)]
            if shutil.which("ninja"):
                configure += ["-G", "Ninja"]
            subprocess.run(configure, check=True)
        subprocess.run(["cmake", "--build", str(build_dir), "--target", "_core"], check=True)
        produced = sorted((source / "python" / "mricolor").glob("_core*.so"))
        if not produced:
            raise RuntimeError("cmake did not produce the _core extension")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(produced[-1], dest)


setup(
    ext_modules=[CMakeExtension("mricolor._core")],
    cmdclass={"build_ext": CMakeBuild},
)
