"""Build the optional compiled kernels.

The package works without them; ``greatscore.kernels`` falls back to the
numpy implementation when ``greatscore._ckernels`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("GREATSCORE_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        compile_args = ["-O3", "-fno-math-errno", "-fopenmp"]
        if os.environ.get("GREATSCORE_NATIVE"):
            compile_args.append("-march=native")  # wider vector exp; binary is not portable
        ext = Extension(
            "greatscore._ckernels",
            ["src/greatscore/_ckernels.pyx"],
            depends=["src/greatscore/_simd.h"],
            include_dirs=[np.get_include(), "src/greatscore"],
            # -fno-math-errno lets the SIMD loops use the vector exp; no fast-math,
            # which would reassociate away the compensated summation
            extra_compile_args=compile_args,
            extra_link_args=["-fopenmp"],
            libraries=["m"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], language_level=3)
    except Exception as exc:  # pragma: no cover - build environment dependent
        print(f"greatscore: building without compiled kernels ({exc})")

setup(ext_modules=ext_modules)
