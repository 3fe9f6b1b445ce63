import os

from setuptools import Extension, setup

ext_modules = []
pyx = os.path.join("src", "tracefem", "backends", "_core.pyx")
if not os.environ.get("TRACEFEM_NO_EXT") and os.path.exists(pyx):
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "tracefem.backends._core",
                    [pyx],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
        )
    except ImportError:
        # Pure-python install still works; the compiled core is optional.
        ext_modules = []

setup(ext_modules=ext_modules)
