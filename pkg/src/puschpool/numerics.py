"""Golden single-precision PUSCH kernels and double-precision oracles.

Kernels take and return ``complex64`` numpy arrays and accept leading batch
axes where it makes sense. All arithmetic goes through :mod:`puschpool.arith`
so a simulated program that performs the same operations in the same order
reproduces these outputs bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from . import arith
from ._validation import (
    check_matrix,
    check_nonnegative,
    check_power_of_four,
    check_square,
    check_vector,
    is_hermitian,
    log4,
)
from .errors import DimensionMismatch, NotPositiveDefinite, PilotZero, SingularDiagonal

PIVOT_TOL = 1e-12
PILOT_TOL = 1e-12


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwiddleTable:
    """Roots of unity ``exp(-2j*pi*e/n)`` for ``e`` in ``[0, n)``, rounded to complex64."""

    n: int
    factors: np.ndarray

    def __post_init__(self):
        check_power_of_four(self.n)
        if self.factors.shape != (self.n,):
            raise DimensionMismatch("twiddle table must hold n factors")

    def stage_factors(self, stage, multiple):
        """Twiddles ``W_n^(b*multiple*4^stage)`` for every butterfly ``b`` of a stage."""
        span = self.n >> (2 * stage)
        b = np.arange(span // 4)
        return self.factors[(b * multiple << (2 * stage)) % self.n]


def make_twiddles(n):
    n = check_power_of_four(n)
    e = np.arange(n)
    # exact integer phase, evaluated in double precision
    return TwiddleTable(n, np.exp(-2j * np.pi * e / n).astype(np.complex64))


def dft_oracle(x):
    """O(N^2) double-precision DFT in natural order. Batched over leading axes."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    out = np.empty_like(x)
    block = max(1, (1 << 22) // n)
    for start in range(0, n, block):
        rows = k[start:start + block]
        w = np.exp(-2j * np.pi * ((rows[:, None] * k[None, :]) % n) / n)
        out[..., start:start + block] = x @ w.T
    return out


def digit_reverse_indices(n):
    """Permutation ``perm`` with ``natural[k] = digit_reversed[perm[k]]``."""
    stages = log4(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(stages):
        rev = (rev << 2) | (idx & 3)
        idx >>= 2
    return rev


def butterfly(a, b, c, d, w1=None, w2=None, w3=None):
    """Radix-4 decimation-in-frequency butterfly on (re, im) pairs.

    Returns the four outputs in stage order; twiddles are omitted in the
    last stage where they are all one.
    """
    t0 = arith.add(a, c)
    t1 = arith.sub(a, c)
    t2 = arith.add(b, d)
    t3 = arith.negj(arith.sub(b, d))
    y0 = arith.add(t0, t2)
    y1 = arith.add(t1, t3)
    y2 = arith.sub(t0, t2)
    y3 = arith.sub(t1, t3)
    if w1 is not None:
        y1 = arith.mul(y1, w1)
        y2 = arith.mul(y2, w2)
        y3 = arith.mul(y3, w3)
    return y0, y1, y2, y3


def fft_stages(x, tw):
    """Run every radix-4 DIF stage in place order; output is digit-reversed."""
    n = tw.n
    stages = log4(n)
    re = x.real.copy()
    im = x.imag.copy()
    lead = x.shape[:-1]
    for k in range(stages):
        groups = 4 ** k
        span = n // groups
        d = span // 4
        re = re.reshape(lead + (groups, 4, d))
        im = im.reshape(lead + (groups, 4, d))
        ins = [(re[..., :, m, :], im[..., :, m, :]) for m in range(4)]
        if k < stages - 1:
            ws = [arith.split(tw.stage_factors(k, m)) for m in (1, 2, 3)]
            outs = butterfly(*ins, *ws)
        else:
            outs = butterfly(*ins)
        new_re = np.empty_like(re)
        new_im = np.empty_like(im)
        for m in range(4):
            new_re[..., :, m, :] = outs[m][0]
            new_im[..., :, m, :] = outs[m][1]
        re = new_re.reshape(lead + (n,))
        im = new_im.reshape(lead + (n,))
    return arith.pack(re, im)


def fft_radix4(x, tw=None):
    """Radix-4 DIF FFT returning natural frequency order (batched over leading axes)."""
    x = np.asarray(x)
    if x.ndim == 0:
        raise DimensionMismatch("x must have at least one axis")
    n = x.shape[-1]
    check_power_of_four(n, name="len(x)")
    if tw is None:
        tw = make_twiddles(n)
    elif tw.n != n:
        raise DimensionMismatch(f"twiddle table is for n={tw.n}, input has {n}")
    x = check_matrix(x.reshape(-1, n), "x").reshape(x.shape)
    scrambled = fft_stages(x, tw)
    return scrambled[..., digit_reverse_indices(n)]


# ---------------------------------------------------------------------------
# matrix kernels
# ---------------------------------------------------------------------------


def mmm(a, b):
    """C = A @ B, accumulated over the inner index in ascending order."""
    a = check_matrix(a, "A", batched=True)
    b = check_matrix(b, "B", batched=True)
    if a.shape[-1] != b.shape[-2]:
        raise DimensionMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    ar, ai = arith.split(a)
    br, bi = arith.split(b)
    acc = None
    for k in range(a.shape[-1]):
        pa = (ar[..., :, k, None], ai[..., :, k, None])
        pb = (br[..., None, k, :], bi[..., None, k, :])
        acc = arith.mul(pa, pb) if acc is None else arith.mac(acc, pa, pb)
    return arith.pack(*acc)


def mmm_oracle(a, b):
    """Naive triple loop in double precision."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    m, n = a.shape
    n2, p = b.shape
    if n != n2:
        raise DimensionMismatch("inner dimensions differ")
    c = np.zeros((m, p), dtype=np.complex128)
    for i in range(m):
        for j in range(p):
            s = 0j
            for k in range(n):
                s += a[i, k] * b[k, j]
            c[i, j] = s
    return c


def gramian(h, sigma2):
    """G = H^H H + sigma2 I for H of shape (..., N_B, N_L)."""
    h = check_matrix(h, "H", batched=True)
    sigma2 = check_nonnegative(sigma2, "sigma2")
    n_b, n_l = h.shape[-2:]
    if n_b < n_l:
        raise DimensionMismatch(f"H must have N_B >= N_L, got {h.shape[-2:]}")
    hr, hi = arith.split(h)
    shape = h.shape[:-2] + (n_l, n_l)
    acc = (np.zeros(shape, np.float32), np.zeros(shape, np.float32))
    for b in range(n_b):
        acc = arith.macc(acc, (hr[..., b, :, None], hi[..., b, :, None]),
                         (hr[..., b, None, :], hi[..., b, None, :]))
    re, im = acc
    diag = np.arange(n_l)
    re[..., diag, diag] = re[..., diag, diag] + np.float32(sigma2)
    return arith.pack(re, im)


def matched_filter(h, y):
    """z = H^H y for H (..., N_B, N_L), y (..., N_B)."""
    h = check_matrix(h, "H", batched=True)
    y = np.asarray(y, dtype=np.complex64)
    if y.shape[-1] != h.shape[-2]:
        raise DimensionMismatch(f"y has {y.shape[-1]} entries, H has {h.shape[-2]} rows")
    hr, hi = arith.split(h)
    yr, yi = arith.split(y)
    shape = np.broadcast_shapes(h.shape[:-2], y.shape[:-1]) + (h.shape[-1],)
    acc = (np.zeros(shape, np.float32), np.zeros(shape, np.float32))
    for b in range(h.shape[-2]):
        acc = arith.macc(acc, (hr[..., b, :], hi[..., b, :]),
                         (yr[..., b, None], yi[..., b, None]))
    return arith.pack(*acc)


def cholesky_crout(g):
    """Lower-triangular L with L L^H = G, built column by column (batched)."""
    g = check_square(g, "G", batched=True)
    if not is_hermitian(g):
        raise ValueError("G is not Hermitian")
    n = g.shape[-1]
    gr, gi = arith.split(g)
    lr = np.zeros_like(gr)
    li = np.zeros_like(gi)
    for j in range(n):
        rows = slice(j, n)
        acc = (gr[..., rows, j].copy(), gi[..., rows, j].copy())
        for k in range(j):
            ljk = (lr[..., j, k, None], li[..., j, k, None])
            acc = arith.msc(acc, (lr[..., rows, k], li[..., rows, k]), ljk)
        pivot = acc[0][..., 0]
        if np.any(~(pivot > PIVOT_TOL)):
            raise NotPositiveDefinite(f"pivot {np.min(pivot):.3e} at column {j} is not positive")
        diag = arith.csqrt_real((acc[0][..., :1], acc[1][..., :1]))
        lr[..., j, j] = diag[0][..., 0]
        li[..., j, j] = 0.0
        if j + 1 < n:
            off = arith.rdiv((acc[0][..., 1:], acc[1][..., 1:]), diag)
            lr[..., j + 1:, j] = off[0]
            li[..., j + 1:, j] = off[1]
    return arith.pack(lr, li)


def _diag_divide(acc, dr, di):
    if np.all(di == 0):
        return arith.rdiv(acc, (dr, di))
    return arith.cdiv(acc, (dr, di))


def _check_triangular_system(l, b):
    l = check_square(l, "L", batched=True)
    b = check_matrix(np.asarray(b)[..., None], "b", batched=True)[..., 0]
    n = l.shape[-1]
    if b.shape[-1] != n:
        raise DimensionMismatch(f"b has length {b.shape[-1]}, L is {n}x{n}")
    diag = np.abs(np.diagonal(l, axis1=-2, axis2=-1))
    if np.any(diag <= PIVOT_TOL):
        raise SingularDiagonal("triangular factor has a (near) zero diagonal entry")
    return l, b


def solve_lower(l, b):
    """Forward substitution: y with L y = b."""
    l, b = _check_triangular_system(l, b)
    n = l.shape[-1]
    lr, li = arith.split(l)
    br, bi = arith.split(b)
    shape = np.broadcast_shapes(l.shape[:-2], b.shape[:-1])
    yr = np.zeros(shape + (n,), np.float32)
    yi = np.zeros(shape + (n,), np.float32)
    for i in range(n):
        acc = (br[..., i], bi[..., i])
        for k in range(i):
            acc = arith.msub(acc, (lr[..., i, k], li[..., i, k]), (yr[..., k], yi[..., k]))
        yr[..., i], yi[..., i] = _diag_divide(acc, lr[..., i, i], li[..., i, i])
    return arith.pack(yr, yi)


def solve_upper(l, y):
    """Backward substitution with the implied upper factor: x with L^H x = y."""
    l, y = _check_triangular_system(l, y)
    n = l.shape[-1]
    lr, li = arith.split(l)
    yr, yi = arith.split(y)
    shape = np.broadcast_shapes(l.shape[:-2], y.shape[:-1])
    xr = np.zeros(shape + (n,), np.float32)
    xi = np.zeros(shape + (n,), np.float32)
    for i in range(n - 1, -1, -1):
        acc = (yr[..., i], yi[..., i])
        for k in range(i + 1, n):
            acc = arith.mscf(acc, (lr[..., k, i], li[..., k, i]), (xr[..., k], xi[..., k]))
        # conj of a real diagonal is itself; complex diagonals need the conjugate
        xr[..., i], xi[..., i] = _diag_divide(acc, lr[..., i, i], -li[..., i, i])
    return arith.pack(xr, xi)


def mmse_equalize(h, y, sigma2):
    """x_hat = (H^H H + sigma2 I)^-1 H^H y via Cholesky and two triangular solves."""
    h = check_matrix(h, "H", batched=True)
    y = np.asarray(y, dtype=np.complex64)
    if y.shape[-1] != h.shape[-2]:
        raise DimensionMismatch(f"y has {y.shape[-1]} entries, H has {h.shape[-2]} rows")
    g = gramian(h, sigma2)
    z = matched_filter(h, y)
    factor = cholesky_crout(g)
    return solve_upper(factor, solve_lower(factor, z))


# ---------------------------------------------------------------------------
# channel and noise estimation
# ---------------------------------------------------------------------------


def comb_mask(n_users, n_sc):
    """``mask[l, sc]`` is True where user ``l`` owns pilot subcarrier ``sc``."""
    sc = np.arange(n_sc)
    return (sc[None, :] % n_users) == np.arange(n_users)[:, None]


def channel_estimate_ls(y_pilot, x_pilot):
    """Least-squares estimate at the pilot comb by element-wise division.

    ``y_pilot`` is (..., N_B, N_SC) and ``x_pilot`` (..., N_L, N_SC). Returns
    (..., N_SC, N_B, N_L); entries of users that do not own a subcarrier are 0.
    """
    y = check_matrix(y_pilot, "Y_pilot", batched=True)
    x = check_matrix(x_pilot, "X_pilot", batched=True)
    if y.shape[-1] != x.shape[-1]:
        raise DimensionMismatch("Y_pilot and X_pilot differ in subcarrier count")
    n_l, n_sc = x.shape[-2:]
    if np.any(np.abs(x)[..., comb_mask(n_l, n_sc)] < PILOT_TOL):
        raise PilotZero("a pilot symbol on an allocated subcarrier is zero")
    lead = np.broadcast_shapes(y.shape[:-2], x.shape[:-2])
    est = np.zeros(lead + (n_sc, y.shape[-2], n_l), dtype=np.complex64)
    for l in range(n_l):
        owned = np.arange(l, n_sc, n_l)
        ys = arith.split(np.swapaxes(y[..., :, owned], -1, -2))
        xs = arith.split(x[..., l, owned, None])
        view = est[..., l]  # a lone array index keeps the subcarrier axis in place
        view[..., owned, :] = arith.pack(*arith.cdiv(ys, xs))
    return est


def comb_average(h_ls, n_users, block):
    """Expand comb estimates to every subcarrier, averaging within coherence blocks.

    ``h_ls`` is (N_pilot, N_SC, N_B, N_L); each user's estimate in a block of
    ``block`` subcarriers is the mean over its pilot subcarriers and symbols.
    """
    h_ls = np.asarray(h_ls, dtype=np.complex64)
    if h_ls.ndim == 3:
        h_ls = h_ls[None]
    n_pilot, n_sc, n_b, n_l = h_ls.shape
    if n_l != n_users or block % n_users or n_sc % block:
        raise DimensionMismatch(
            f"block={block} must be a multiple of N_L={n_users} and divide N_SC={n_sc}")
    per = h_ls.reshape(n_pilot, n_sc // block, block // n_users, n_users, n_b, n_l)
    picked = np.stack([per[:, :, :, l, :, l] for l in range(n_l)], axis=-1)
    # (n_pilot, blocks, per_block, n_b, n_l) -> mean in double, stored as complex64
    mean = picked.astype(np.complex128).mean(axis=(0, 2)).astype(np.complex64)
    return np.repeat(mean, block, axis=0)


def residual(y_pilot, h_hat, x_pilot):
    """y - H_hat x on every pilot resource element, shape (..., N_B, N_SC)."""
    y = check_matrix(y_pilot, "Y_pilot", batched=True)
    x = check_matrix(x_pilot, "X_pilot", batched=True)
    h = np.asarray(h_hat, dtype=np.complex64)
    n_b, n_sc = y.shape[-2:]
    n_l = x.shape[-2]
    if h.shape[-3:] != (n_sc, n_b, n_l) or x.shape[-1] != n_sc:
        raise DimensionMismatch(
            f"H_hat {h.shape} does not match Y {y.shape} and X {x.shape}")
    hr, hi = arith.split(np.moveaxis(h, -3, -1))  # (..., N_B, N_L, N_SC)
    xr, xi = arith.split(x)
    acc = arith.split(y)
    acc = (acc[0].copy(), acc[1].copy())
    for l in range(n_l):
        acc = arith.msub(acc, (hr[..., :, l, :], hi[..., :, l, :]),
                         (xr[..., None, l, :], xi[..., None, l, :]))
    return arith.pack(*acc)


def noise_variance_estimate(y_pilot, h_hat, x_pilot):
    """Mean residual power over all pilot resource elements and beams.

    The normalisation is ``N_B * N_SC * N_pilot``; the power sum is accumulated
    in double precision.
    """
    r = residual(y_pilot, h_hat, x_pilot)
    power = np.sum(np.abs(r.astype(np.complex128)) ** 2)
    return float(power / r.size)


def normal_equations_oracle(h, y, sigma2):
    """Double-precision (H^H H + sigma2 I)^-1 H^H y with an explicit solve."""
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    hh = np.conj(np.swapaxes(h, -1, -2))
    g = hh @ h + sigma2 * np.eye(h.shape[-1])
    return np.linalg.solve(g, (hh @ y[..., None]))[..., 0]


def relative_error(actual, expected):
    """Frobenius-norm relative error, with an absolute fallback for zero references."""
    actual = np.asarray(actual, dtype=np.complex128)
    expected = np.asarray(expected, dtype=np.complex128)
    den = np.linalg.norm(expected)
    num = np.linalg.norm(actual - expected)
    return float(num / den) if den > 0 else float(num)


__all__ = [
    "TwiddleTable", "make_twiddles", "dft_oracle", "digit_reverse_indices", "butterfly",
    "fft_stages", "fft_radix4", "mmm", "mmm_oracle", "gramian", "matched_filter",
    "cholesky_crout", "solve_lower", "solve_upper", "mmse_equalize", "comb_mask",
    "channel_estimate_ls", "comb_average", "residual", "noise_variance_estimate",
    "normal_equations_oracle", "relative_error", "check_vector",
]
