"""Single-precision complex arithmetic on (re, im) pairs.

The golden kernels (numpy float32 arrays) and the simulator (numpy float32
scalars) evaluate through these same functions, so each operation rounds
identically on both paths. numpy's own complex64 multiply does not: its
scalar and vectorised loops disagree in the last bit.
"""

import numpy as np

f32 = np.float32
ZERO = (f32(0.0), f32(0.0))


def split(z):
    """complex64 array -> (re, im) float32 arrays (views)."""
    z = np.asarray(z, dtype=np.complex64)
    return z.real, z.imag


def pack(re, im):
    out = np.empty(np.shape(re), dtype=np.complex64)
    out.real = re
    out.imag = im
    return out


def to_pairs(z):
    """complex64 array -> list of (f32, f32) scalar pairs, flattened."""
    z = np.asarray(z, dtype=np.complex64).ravel()
    return list(zip(z.real, z.imag))


def from_pairs(pairs):
    arr = np.array([(p[0], p[1]) for p in pairs], dtype=np.float32).reshape(-1, 2)
    return pack(arr[:, 0], arr[:, 1])


def add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def negj(a):
    """-j * a"""
    return (a[1], -a[0])


def mul(a, b):
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def mac(acc, a, b):
    """acc + a*b"""
    return add(acc, mul(a, b))


def macc(acc, a, b):
    """acc + conj(a)*b"""
    return (acc[0] + (a[0] * b[0] + a[1] * b[1]), acc[1] + (a[0] * b[1] - a[1] * b[0]))


def msub(acc, a, b):
    """acc - a*b"""
    return sub(acc, mul(a, b))


def msc(acc, a, b):
    """acc - a*conj(b)"""
    return (acc[0] - (a[0] * b[0] + a[1] * b[1]), acc[1] - (a[1] * b[0] - a[0] * b[1]))


def mscf(acc, a, b):
    """acc - conj(a)*b"""
    return (acc[0] - (a[0] * b[0] + a[1] * b[1]), acc[1] - (a[0] * b[1] - a[1] * b[0]))


def abs2acc(acc, a):
    """acc + |a|^2 (result is real)"""
    return (acc[0] + (a[0] * a[0] + a[1] * a[1]), acc[1])


def rdiv(a, d):
    """a / Re(d)"""
    return (a[0] / d[0], a[1] / d[0])


def cdiv(a, b):
    """a / b via a*conj(b) / |b|^2"""
    den = b[0] * b[0] + b[1] * b[1]
    return ((a[0] * b[0] + a[1] * b[1]) / den, (a[1] * b[0] - a[0] * b[1]) / den)


def csqrt_real(a):
    """sqrt(Re(a)), imaginary part dropped (Cholesky pivots are real)."""
    return (np.sqrt(a[0]), a[1] * f32(0.0))


def scale(a, s):
    return (a[0] * s, a[1] * s)
