"""Build script for the optional compiled AES core.

Usage:
    python setup_ext.py build_ext --inplace

This compiles src/garblesim/_aescore.pyx into a shared object next to the
pure-Python fallback. The package works without it; garblesim.cryptocore
picks whichever backend is importable.
"""

from setuptools import setup, Extension
from Cython.Build import cythonize

extensions = [
    Extension(
        "garblesim._aescore",
        ["src/garblesim/_aescore.pyx"],
    ),
]

setup(
    name="garblesim-ext",
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    ),
    package_dir={"": "src"},
)
