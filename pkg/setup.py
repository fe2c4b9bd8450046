"""Build hook: compiles the optional scan kernel extension.

The package is fully functional without the extension (a pure-Python
kernel is selected at import time), so any failure here downgrades to
a plain build instead of aborting the install.
"""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/heapfacts/_kernel/_scan_cy.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - depends on build host
    print(f"heapfacts: building without compiled kernel ({exc})")

setup(ext_modules=ext_modules)
