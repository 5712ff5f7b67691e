"""Numerical laboratory for Heisenberg nilflows and their time-changes."""

import os

# The Weyl-sum kernels honour a --threads flag above the number of cores, so
# raise numba's launch-time cap before numba is first imported anywhere.
os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, os.cpu_count() or 1)))

__version__ = "0.1.0"
