import os

from setuptools import setup

CFLAGS = ["-O3", "-ffast-math"]
if os.environ.get("FETSGAN_PORTABLE") != "1":
    CFLAGS.append("-march=native")

ext_modules = []
if os.environ.get("FETSGAN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "fetsgan.engine._gru_ext",
                    ["src/fetsgan/engine/_gru_ext.pyx"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    include_dirs=[np.get_include(), "src/fetsgan/engine"],
                    libraries=["mvec", "m"],
                    # fast-math at compile time only: lets libmvec vectorize the
                    # gate loops without linking crtfastmath (which would flip FTZ
                    # for the whole process)
                    extra_compile_args=CFLAGS,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
