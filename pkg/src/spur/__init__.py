"""Iterative magnitude pruning with a deviance regularizer that steers
surviving weights away from rank-one magnitude structure.

Importing this package pins the BLAS thread pools to one thread (unless
the variables are already set) so numeric results are reproducible bit
for bit; worker parallelism is handled at the process level instead.
"""

import os as _os

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    _os.environ.setdefault(_var, "1")

from .errors import (
    ConfigurationError,
    ContractError,
    InputError,
    IntegrityError,
    ShapeError,
    SpurError,
    TrainingAborted,
)
from .matrix import Matrix

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ContractError",
    "InputError",
    "IntegrityError",
    "Matrix",
    "ShapeError",
    "SpurError",
    "TrainingAborted",
    "__version__",
]
