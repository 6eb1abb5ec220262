"""Input validation helpers, in the spirit of ``sklearn.utils.validation``.

Every public kernel funnels its arguments through these so that the golden
numerics always see finite ``complex64`` arrays of the expected rank.
"""

import numbers

import numpy as np

from .errors import DimensionMismatch, LengthNotPowerOfFour

HERMITIAN_RTOL = 1e-6


def is_power_of_four(n):
    if not isinstance(n, numbers.Integral) or n < 1:
        return False
    n = int(n)
    return n & (n - 1) == 0 and (n.bit_length() - 1) % 2 == 0


def check_power_of_four(n, name="n", minimum=4):
    if not is_power_of_four(n) or n < minimum:
        raise LengthNotPowerOfFour(f"{name}={n!r} is not a power of 4 >= {minimum}")
    return int(n)


def log4(n):
    check_power_of_four(n, minimum=1)
    return (int(n).bit_length() - 1) // 2


def check_positive_int(value, name):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_nonnegative(value, name):
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
    return value


def _as_complex(x, name, dtype):
    arr = np.asarray(x)
    if arr.dtype == object:
        raise TypeError(f"{name} must be numeric")
    arr = arr.astype(dtype, copy=False)
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_vector(x, name="x", dtype=np.complex64, length=None):
    """Return ``x`` as a finite 1-D complex array (a ComplexVector)."""
    arr = _as_complex(x, name, dtype)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


def check_matrix(a, name="A", dtype=np.complex64, batched=False):
    """Return ``a`` as a finite complex matrix (row-major ComplexMatrix).

    With ``batched=True`` any number of leading batch axes is accepted.
    """
    arr = _as_complex(a, name, dtype)
    if arr.ndim < 2 or (arr.ndim > 2 and not batched):
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def check_square(a, name="A", batched=False):
    arr = check_matrix(a, name, batched=batched)
    if arr.shape[-1] != arr.shape[-2]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    return arr


def is_hermitian(a, rtol=HERMITIAN_RTOL):
    a = np.asarray(a)
    diff = np.abs(a - np.conj(np.swapaxes(a, -1, -2)))
    return bool(np.all(diff <= rtol * np.maximum(1.0, np.abs(a))))


def is_lower_triangular(a):
    a = np.asarray(a)
    n = a.shape[-1]
    return bool(np.all(a[..., np.triu_indices(n, 1)[0], np.triu_indices(n, 1)[1]] == 0))
