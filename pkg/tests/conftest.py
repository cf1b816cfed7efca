"""Shared test setup.

Thread pinning has to happen before numpy loads anywhere in the test
process: single-threaded BLAS keeps floating-point reduction order fixed,
which the determinism tests (bit-identical traces and checkpoints) rely on.
"""

import os

for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
