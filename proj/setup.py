"""CMake-driven build of the `_unicon` extension.

`pip install . --no-build-isolation` configures the CMake project, builds the
pybind11 module (plus the core library it links), and drops the extension into
the `unicon` package.
"""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext: CMakeExtension) -> None:
        out_dir = Path(self.get_ext_fullpath(ext.name)).parent.resolve()
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)

        cfg = "Release"
        cmake_args = [
            f"-DCMAKE_BUILD_TYPE={cfg}",
            f"-DCMAKE_LIBRARY_OUTPUT_DIRECTORY={out_dir}",
            f"-DPYTHON_EXECUTABLE={sys.executable}",
            "-DUNICON_BUILD_PYTHON=ON",
        ]
        try:
            import pybind11

            cmake_args.append(f"-Dpybind11_DIR={pybind11.get_cmake_dir()}")
        except ImportError:
            pass

        source_dir = Path(__file__).parent.resolve()
        subprocess.check_call(["cmake", "-S", str(source_dir), "-B", str(build_dir)] + cmake_args)
        jobs = os.environ.get("CMAKE_BUILD_PARALLEL_LEVEL", "2")
        subprocess.check_call(
            ["cmake", "--build", str(build_dir), "--target", "_unicon", "-j", jobs]
        )


setup(
    ext_modules=[CMakeExtension("unicon._unicon")],
    cmdclass={"build_ext": CMakeBuild},
)
