"""Numerical laboratory for the continuous directed polymer in d >= 3."""

import os

import numba

__version__ = "0.1.0"

# The bundled TBB is too old for numba; OpenMP avoids a warning on every run.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"


def set_threads(n):
    """Worker threads for the path kernels; results do not depend on it."""
    if n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
