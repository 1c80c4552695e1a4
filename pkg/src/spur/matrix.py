"""Dense 2-D float64 matrix wrapper.

Every tensor in the package is a Matrix: a thin, validated handle around a
C-contiguous float64 numpy array of shape (rows, cols). Vectors are 1-row
or 1-column matrices; scalars are 1x1. Validation happens once at the
boundary (construction from untrusted data); internal code uses the
trusted `_wrap` path to avoid rescanning large arrays every operation.
"""

import numpy as np

from .errors import InputError, ShapeError


class Matrix:
    """A rows x cols matrix of finite float64 values.

    Parameters
    ----------
    data : array-like
        Anything numpy can turn into a 2-D float64 array. 1-D input is
        rejected; callers must be explicit about orientation.
    """

    __slots__ = ("a",)

    def __init__(self, data):
        a = np.array(data, dtype=np.float64, order="C")
        if a.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got ndim={a.ndim}")
        if a.size == 0:
            raise InputError("matrix must be non-empty")
        if not np.all(np.isfinite(a)):
            raise InputError("matrix contains non-finite values")
        self.a = a

    @classmethod
    def _wrap(cls, a):
        """Wrap an array that is already known to be valid.

        `a` must be a C-contiguous 2-D float64 ndarray with finite entries.
        No copies, no checks; this is the internal fast path.
        """
        m = object.__new__(cls)
        m.a = a
        return m

    @classmethod
    def zeros(cls, rows, cols):
        if rows < 1 or cols < 1:
            raise ShapeError(f"invalid shape ({rows}, {cols})")
        return cls._wrap(np.zeros((rows, cols), dtype=np.float64))

    @classmethod
    def full(cls, rows, cols, value):
        if rows < 1 or cols < 1:
            raise ShapeError(f"invalid shape ({rows}, {cols})")
        v = float(value)
        if not np.isfinite(v):
            raise InputError("fill value must be finite")
        return cls._wrap(np.full((rows, cols), v, dtype=np.float64))

    @property
    def rows(self):
        return self.a.shape[0]

    @property
    def cols(self):
        return self.a.shape[1]

    @property
    def shape(self):
        return self.a.shape

    @property
    def size(self):
        return self.a.size

    def copy(self):
        return Matrix._wrap(self.a.copy())

    def item(self):
        """Return the sole entry of a 1x1 matrix as a Python float."""
        if self.a.shape != (1, 1):
            raise ShapeError(f"item() requires shape (1, 1), got {self.a.shape}")
        return float(self.a[0, 0])

    def tolist(self):
        return self.a.tolist()

    def __eq__(self, other):
        if not isinstance(other, Matrix):
            return NotImplemented
        return self.a.shape == other.a.shape and bool(np.array_equal(self.a, other.a))

    def __repr__(self):
        return f"Matrix({self.a.tolist()!r})"
