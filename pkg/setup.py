import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python fallback kernels are selected at import time, so the
    # package remains fully functional without the compiled core.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "spinsink._core",
                ["src/spinsink/_core.pyx"],
                include_dirs=[np.get_include()],
                # -fcx-limited-range: inline complex multiplies (no NaN-branch
                # libcalls); the kernels never rely on inf/nan propagation.
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
