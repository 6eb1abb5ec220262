import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puschpool import numerics as nm
from puschpool.errors import (DimensionMismatch, LengthNotPowerOfFour, NotPositiveDefinite,
                              PilotZero, SingularDiagonal)

from conftest import crandn, random_spd64


def rel(a, b):
    return nm.relative_error(a, b)


# ---------------------------------------------------------------------------
# DFT / FFT
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("x, expected", [
    ([1, 0, 0, 0], [1, 1, 1, 1]),
    ([1, 1, 1, 1], [4, 0, 0, 0]),
])
def test_dft_oracle_trivial(x, expected):
    np.testing.assert_allclose(nm.dft_oracle(np.array(x, complex)), expected, atol=1e-12)


def test_dft_oracle_matches_numpy(rng):
    x = crandn(rng, 64)
    assert rel(nm.dft_oracle(x), np.fft.fft(x.astype(np.complex128))) < 1e-12


def test_fft_delta():
    out = nm.fft_radix4(np.array([1, 0, 0, 0], np.complex64), nm.make_twiddles(4))
    np.testing.assert_allclose(out, [1, 1, 1, 1])


def test_fft_single_tone():
    j = np.arange(16)
    x = np.exp(2j * np.pi * 3 * j / 16).astype(np.complex64)
    out = nm.fft_radix4(x, nm.make_twiddles(16))
    assert abs(out[3] - 16) <= 1e-4 * 16
    assert np.max(np.abs(np.delete(out, 3))) <= 1e-4 * 16


@pytest.mark.parametrize("n", [4, 16, 64, 256, 1024, 4096])
def test_fft_matches_oracle(n):
    tw = nm.make_twiddles(n)
    for seed in range(3):
        x = crandn(np.random.default_rng(seed), n)
        assert rel(nm.fft_radix4(x, tw), nm.dft_oracle(x)) <= 1e-4


def test_fft_batched_rows_match_single(rng):
    x = crandn(rng, (3, 64))
    batched = nm.fft_radix4(x)
    for row, xr in zip(batched, x):
        np.testing.assert_array_equal(row, nm.fft_radix4(xr))


@pytest.mark.parametrize("n", [2, 8, 12, 32, 0])
def test_fft_rejects_non_power_of_four(n):
    with pytest.raises(LengthNotPowerOfFour):
        nm.fft_radix4(np.ones(n, np.complex64))


def test_fft_rejects_length_table_mismatch():
    with pytest.raises((LengthNotPowerOfFour, DimensionMismatch)):
        nm.fft_radix4(np.ones(16, np.complex64), nm.make_twiddles(64))


def test_twiddles_unit_modulus():
    tw = nm.make_twiddles(4096)
    assert np.max(np.abs(np.abs(tw.factors) - 1)) <= 1e-6


def test_digit_reverse_is_permutation():
    for n in (4, 16, 64, 256):
        perm = nm.digit_reverse_indices(n)
        assert sorted(perm) == list(range(n))
        # base-4 digit reversal is an involution
        np.testing.assert_array_equal(perm[perm], np.arange(n))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([4, 16, 64, 256]), st.integers(0, 2**32 - 1))
def test_fft_parseval(n, seed):
    x = crandn(np.random.default_rng(seed), n)
    out = nm.fft_radix4(x).astype(np.complex128)
    energy_in = n * np.sum(np.abs(x.astype(np.complex128)) ** 2)
    assert abs(np.sum(np.abs(out) ** 2) - energy_in) <= 1e-4 * energy_in


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([16, 64, 256]), st.integers(0, 2**32 - 1),
       st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=4, allow_nan=False, allow_infinity=False))
def test_fft_linearity(n, seed, alpha, beta):
    rng = np.random.default_rng(seed)
    x, z = crandn(rng, n), crandn(rng, n)
    combo = (alpha * x.astype(np.complex128) + beta * z).astype(np.complex64)
    lhs = nm.fft_radix4(combo)
    rhs = alpha * nm.fft_radix4(x).astype(np.complex128) + beta * nm.fft_radix4(z)
    scale = max(np.linalg.norm(rhs), 1e-3 * np.sqrt(n))
    assert np.linalg.norm(lhs - rhs) / scale <= 1e-5


# ---------------------------------------------------------------------------
# MMM and Gramian
# ---------------------------------------------------------------------------


def test_mmm_identity(rng):
    a = crandn(rng, (5, 7))
    np.testing.assert_array_equal(nm.mmm(a, np.eye(7, dtype=np.complex64)), a)


def test_mmm_diagonal_example():
    a = np.array([[1 + 1j, 0], [0, 2]], np.complex64)
    b = np.array([[1, 0], [0, 1 - 1j]], np.complex64)
    np.testing.assert_array_equal(nm.mmm(a, b), [[1 + 1j, 0], [0, 2 - 2j]])


def test_mmm_matches_triple_loop(rng):
    a, b = crandn(rng, (8, 8)), crandn(rng, (8, 8))
    ref = np.zeros((8, 8), complex)
    for i in range(8):
        for j in range(8):
            for k in range(8):
                ref[i, j] += complex(a[i, k]) * complex(b[k, j])
    assert rel(nm.mmm(a, b), ref) <= 1e-5
    assert rel(nm.mmm_oracle(a, b), ref) <= 1e-12


def test_mmm_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        nm.mmm(crandn(rng, (4, 3)), crandn(rng, (4, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_mmm_linearity(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    a, b, c = crandn(rng, (6, 5)), crandn(rng, (5, 4)), crandn(rng, (5, 4))
    combo = (alpha * b + beta * c).astype(np.complex64)
    lhs = nm.mmm(a, combo)
    rhs = alpha * nm.mmm(a, b).astype(complex) + beta * nm.mmm(a, c)
    assert np.linalg.norm(lhs - rhs) <= 1e-5 * max(1.0, np.linalg.norm(rhs))


@pytest.mark.parametrize("h, sigma2, expected", [
    (np.eye(2), 0.0, np.eye(2)),
    (np.array([[2], [0]]), 1.0, np.array([[5]])),
])
def test_gramian_examples(h, sigma2, expected):
    np.testing.assert_allclose(nm.gramian(h.astype(np.complex64), sigma2), expected)


def test_gramian_matches_direct(rng):
    h = crandn(rng, (64, 4))
    hd = h.astype(complex)
    ref = hd.conj().T @ hd + 0.1 * np.eye(4)
    g = nm.gramian(h, 0.1)
    assert np.max(np.abs(g - ref)) / np.max(np.abs(ref)) <= 1e-6
    np.testing.assert_allclose(g, g.conj().T, atol=1e-6)
    assert np.all(np.linalg.eigvalsh(g.astype(complex)) > 0)


def test_gramian_needs_tall_matrix(rng):
    with pytest.raises(DimensionMismatch):
        nm.gramian(crandn(rng, (2, 4)), 0.0)


# ---------------------------------------------------------------------------
# Cholesky and triangular solves
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("g, expected", [
    (np.eye(3), np.eye(3)),
    (np.diag([4.0, 9.0]), np.diag([2.0, 3.0])),
])
def test_cholesky_examples(g, expected):
    np.testing.assert_allclose(nm.cholesky_crout(g.astype(np.complex64)), expected, atol=1e-7)


@pytest.mark.parametrize("n", [2, 3, 4, 8, 16, 32])
def test_cholesky_reconstruction(n, rng):
    for _ in range(5):
        g = random_spd64(rng, n)
        l = nm.cholesky_crout(g).astype(complex)
        assert np.all(np.triu(l, 1) == 0)
        assert np.all(np.diag(l).real > 0) and np.all(np.diag(l).imag == 0)
        assert rel(l @ l.conj().T, g) <= 1e-5


def test_cholesky_is_column_by_column(rng):
    """Changing a trailing block of G leaves the leading columns of L untouched."""
    g = random_spd64(rng, 8)
    g2 = g.copy()
    g2[5:, 5:] += 3 * np.eye(3, dtype=np.complex64)
    l, l2 = nm.cholesky_crout(g), nm.cholesky_crout(g2)
    np.testing.assert_array_equal(l[:, :5], l2[:, :5])


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        nm.cholesky_crout(np.array([[1, 2], [2, 1]], np.complex64))


def test_solves_identity(rng):
    b = crandn(rng, 4)
    eye = np.eye(4, dtype=np.complex64)
    np.testing.assert_array_equal(nm.solve_lower(eye, b), b)
    np.testing.assert_array_equal(nm.solve_upper(eye, b), b)


def test_solve_lower_hand_example():
    l = np.array([[2, 0], [1, 1]], np.complex64)
    np.testing.assert_allclose(nm.solve_lower(l, np.array([2, 3], np.complex64)), [1, 2])


def test_solve_residuals(rng):
    l = np.tril(crandn(rng, (32, 32))) + 8 * np.eye(32, dtype=np.complex64)
    l[np.diag_indices(32)] = np.abs(np.diag(l))
    b = crandn(rng, 32)
    y = nm.solve_lower(l, b)
    x = nm.solve_upper(l, y)
    ld = l.astype(complex)
    assert np.linalg.norm(ld @ y - b) / np.linalg.norm(b) <= 1e-5
    assert np.linalg.norm(ld.conj().T @ x - y) / np.linalg.norm(y) <= 1e-5


def test_solve_singular_diagonal():
    l = np.array([[1, 0], [1, 0]], np.complex64)
    with pytest.raises(SingularDiagonal):
        nm.solve_lower(l, np.ones(2, np.complex64))


# ---------------------------------------------------------------------------
# MMSE
# ---------------------------------------------------------------------------


def test_mmse_identity(rng):
    y = crandn(rng, 3)
    np.testing.assert_allclose(nm.mmse_equalize(np.eye(3, dtype=np.complex64), y, 0.0), y)


@pytest.mark.parametrize("n_b, n_l", [(2, 2), (8, 4), (32, 16), (64, 32)])
def test_mmse_noiseless_recovery(n_b, n_l, rng):
    h = crandn(rng, (n_b, n_l))
    x0 = crandn(rng, n_l)
    y = (h.astype(complex) @ x0).astype(np.complex64)
    assert rel(nm.mmse_equalize(h, y, 0.0), x0) <= 1e-4


def test_mmse_matches_normal_equations(rng):
    h = crandn(rng, (64, 4))
    y = (h.astype(complex) @ crandn(rng, 4) + crandn(rng, 64, 0.01)).astype(np.complex64)
    xh = nm.mmse_equalize(h, y, 0.01)
    assert rel(xh, nm.normal_equations_oracle(h, y, 0.01)) <= 1e-4
    # explicit pseudo-inverse style oracle, double precision
    hd = h.astype(complex)
    ref = np.linalg.inv(hd.conj().T @ hd + 0.01 * np.eye(4)) @ hd.conj().T @ y
    assert rel(xh, ref) <= 1e-4
    g = nm.gramian(h, 0.01).astype(complex)
    assert np.linalg.norm(g @ xh - hd.conj().T @ y) / np.linalg.norm(hd.conj().T @ y) <= 1e-4


def test_mmse_shrinkage(rng):
    h = crandn(rng, (16, 4))
    y = crandn(rng, 16)
    norms = [np.linalg.norm(nm.mmse_equalize(h, y, s2)) for s2 in (0, 0.01, 0.1, 1, 10)]
    assert all(b <= a * (1 + 1e-6) for a, b in zip(norms, norms[1:]))


# ---------------------------------------------------------------------------
# channel and noise estimation
# ---------------------------------------------------------------------------


def test_che_identity():
    x = np.exp(1j * np.linspace(0, 3, 8)).astype(np.complex64)[None]
    h = nm.channel_estimate_ls(x, x)
    np.testing.assert_allclose(h[:, 0, 0], np.ones(8), atol=1e-7)


def test_che_constant_channel(rng):
    n_l, n_sc = 4, 32
    x = np.exp(2j * np.pi * rng.random((n_l, n_sc))).astype(np.complex64)
    mask = nm.comb_mask(n_l, n_sc)
    x = x * mask
    y = np.repeat((2j * x.sum(axis=0))[None], 3, axis=0).astype(np.complex64)
    h = nm.channel_estimate_ls(y, x)
    for l in range(n_l):
        np.testing.assert_allclose(h[mask[l], :, l], 2j, atol=1e-6)


def test_che_forward_model(rng):
    n_b, n_l, n_sc = 8, 4, 64
    h0 = crandn(rng, (n_sc, n_b, n_l))
    x = (np.exp(2j * np.pi * rng.random((n_l, n_sc))) * nm.comb_mask(n_l, n_sc)).astype(np.complex64)
    y = np.einsum("sbl,ls->bs", h0.astype(complex), x).astype(np.complex64)
    h = nm.channel_estimate_ls(y, x)
    mask = nm.comb_mask(n_l, n_sc)
    for l in range(n_l):
        assert rel(h[mask[l], :, l], h0[mask[l], :, l]) <= 1e-5


def test_che_pilot_zero():
    x = np.ones((2, 4), np.complex64)
    x[1, 1] = 0
    with pytest.raises(PilotZero):
        nm.channel_estimate_ls(np.ones((3, 4), np.complex64), x)


def test_noise_zero_for_exact_model(rng):
    h = crandn(rng, (16, 4, 2))
    x = crandn(rng, (2, 16))
    y = np.einsum("sbl,ls->bs", h.astype(complex), x).astype(np.complex64)
    assert nm.noise_variance_estimate(y, h, x) <= 1e-12


def test_noise_unit_residual():
    h = np.zeros((8, 3, 2), np.complex64)
    x = np.ones((2, 8), np.complex64)
    y = np.ones((3, 8), np.complex64)
    assert nm.noise_variance_estimate(y, h, x) == pytest.approx(1.0)


def test_noise_monte_carlo(rng):
    n_b, n_l, n_sc = 64, 4, 4096
    h = crandn(rng, (n_sc, n_b, n_l))
    x = (np.exp(2j * np.pi * rng.random((n_l, n_sc))) * nm.comb_mask(n_l, n_sc)).astype(np.complex64)
    y = (np.einsum("sbl,ls->bs", h.astype(complex), x) + crandn(rng, (n_b, n_sc), 0.25))
    est = nm.noise_variance_estimate(y.astype(np.complex64), h, x)
    assert abs(est - 0.25) <= 0.05 * 0.25
