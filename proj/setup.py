import glob
import os

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

vendor = "vendor" if os.path.exists("vendor/CLI11.hpp") else "/opt/vendor"

ext = Pybind11Extension(
    "abysslight._abysslight",
    sorted(glob.glob("src/*.cpp")) + ["bindings/module.cpp"],
    include_dirs=["include", vendor],
    libraries=["png", "z"],
    cxx_std=20,
)

setup(ext_modules=[ext], cmdclass={"build_ext": build_ext})
