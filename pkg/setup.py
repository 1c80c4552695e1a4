from setuptools import Extension, setup
from Cython.Build import cythonize

extensions = [
    Extension(
        "spur.kernels._fast",
        ["src/spur/kernels/_fast.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
