import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "memsde._core",
        sources=["src/memsde/_core.pyx", "src/memsde/_kernels.c"],
        include_dirs=[np.get_include(), "src/memsde"],
        extra_compile_args=["-Ofast", "-march=native", "-funroll-loops",
                            "-fno-stack-protector", "-fno-wrapv"],
        extra_link_args=["-lmvec", "-lm"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
