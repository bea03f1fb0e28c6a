from setuptools import Extension, setup
from Cython.Build import cythonize

COMPILER_DIRECTIVES = {
    "language_level": "3",
    "boundscheck": False,
    "wraparound": False,
    "initializedcheck": False,
    "cdivision": True,
}

ext_modules = [
    Extension(
        "spanhead.diffmath._convkernel",
        ["src/spanhead/diffmath/_convkernel.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(ext_modules=cythonize(ext_modules, compiler_directives=COMPILER_DIRECTIVES))
