"""Select the compiled kernels when importable, else the numpy fallback.

Set ``DCACAL_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

kernels = _kernels_py
name = "python"

if os.environ.get("DCACAL_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        name = "cython"

bin_stats = kernels.bin_stats
mmce_weighted = kernels.mmce_weighted
