"""Kernel backend selection.

Two interchangeable backends implement the numeric hot spots: a compiled
Cython extension (``_fast``) and a pure-Python fallback (``pyref``). They
are bit-identical by construction, so which one is active never changes a
result, only how fast it arrives.

The choice is controlled by the SPUR_BACKEND environment variable, read
once at import time:

  auto    use the compiled backend if it imported, else the fallback (default)
  cython  require the compiled backend, fail if unavailable
  python  force the pure-Python fallback
"""

import os

_choice = os.environ.get("SPUR_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(
        f"SPUR_BACKEND must be one of auto, cython, python; got {_choice!r}"
    )

if _choice == "python":
    from . import pyref as impl

    BACKEND_NAME = "python"
else:
    try:
        from . import _fast as impl

        BACKEND_NAME = "cython"
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "SPUR_BACKEND=cython but the compiled extension is not "
                "importable; rebuild the package or use SPUR_BACKEND=python"
            )
        from . import pyref as impl

        BACKEND_NAME = "python"

softmax_rows = impl.softmax_rows
softmax_rows_backward = impl.softmax_rows_backward
cross_entropy_mean = impl.cross_entropy_mean
cross_entropy_mean_backward = impl.cross_entropy_mean_backward
layer_norm_rows = impl.layer_norm_rows
layer_norm_rows_backward = impl.layer_norm_rows_backward
sum_all = impl.sum_all
sum_rows = impl.sum_rows
sum_cols = impl.sum_cols
mean_all = impl.mean_all
adam_step = impl.adam_step
