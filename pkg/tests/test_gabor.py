import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gfrkit.errors import IndexOutOfRange, InvalidScale
from gfrkit.gabor import (DEFAULT_SCALES, GaborParams, bank_to_csv, centrosymmetric,
                          anticentrosymmetric, dct_basis, gabor_raw, make_bank, make_gabor,
                          symmetric_lr, symmetric_ud, antisymmetric_lr, antisymmetric_ud)

PI = math.pi
scales = st.sampled_from(DEFAULT_SCALES)
phases = st.sampled_from([0.0, PI / 2])
orients = st.integers(0, 31)


def g(phi, sigma, k):
    return make_gabor(GaborParams(phi, sigma, k * PI / 32)).weights


def test_direct_formula():
    # evaluate the Gabor formula at one grid point by hand
    p = GaborParams(PI / 2, 1.0, 5 * PI / 32)
    x, y = 1.5, -2.5  # column 5, row 1
    xr = x * math.cos(p.theta) + y * math.sin(p.theta)
    yr = -x * math.sin(p.theta) + y * math.cos(p.theta)
    lam = 1.0 / 0.56
    want = math.exp(-(xr ** 2 + 0.25 * yr ** 2) / 2) * math.cos(2 * PI * xr / lam + PI / 2)
    assert gabor_raw(p)[1, 5] == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("sigma", DEFAULT_SCALES)
def test_horizontal_even_kernel_symmetric_both_ways(sigma):
    w = g(0, sigma, 0)
    assert symmetric_ud(w) and symmetric_lr(w)


@pytest.mark.parametrize("sigma", DEFAULT_SCALES)
def test_vertical_odd_kernel(sigma):
    w = g(PI / 2, sigma, 16)
    np.testing.assert_allclose(w, -np.flipud(w), atol=1e-12)
    np.testing.assert_allclose(w, np.fliplr(w), atol=1e-12)


def test_rot180_at_three_32nds():
    w = g(0, 1.0, 3)
    np.testing.assert_allclose(w, np.rot90(w, 2), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(phases, scales, orients)
def test_zero_mean(phi, sigma, k):
    assert abs(g(phi, sigma, k).sum()) < 1e-10


@settings(max_examples=60, deadline=None)
@given(phases, scales, orients.filter(lambda k: k % 16))
def test_oblique_kernels_only_centro(phi, sigma, k):
    w = g(phi, sigma, k)
    assert not (symmetric_ud(w) or antisymmetric_ud(w) or symmetric_lr(w) or antisymmetric_lr(w))
    assert centrosymmetric(w) if phi == 0 else anticentrosymmetric(w)


@settings(max_examples=60, deadline=None)
@given(scales, st.integers(1, 31))
def test_mirror_relation(sigma, k):
    for phi, sign in ((0.0, 1), (PI / 2, -1)):
        w, m = g(phi, sigma, k), g(phi, sigma, 32 - k)
        assert np.max(np.abs(w - np.fliplr(m))) < 1e-10
        assert np.max(np.abs(w - sign * np.flipud(m))) < 1e-10


@settings(max_examples=60, deadline=None)
@given(phases, scales, st.integers(0, 16))
def test_transpose_relation(phi, sigma, k):
    assert np.max(np.abs(g(phi, sigma, k) - g(phi, sigma, 16 - k).T)) < 1e-10


@settings(max_examples=40, deadline=None)
@given(scales, st.floats(0, PI))
def test_half_turn(sigma, theta):
    # theta + pi flips x' and y'; the odd kernel negates, the even one is unchanged
    odd = gabor_raw(GaborParams(PI / 2, sigma, theta))
    odd2 = gabor_raw(GaborParams(PI / 2, sigma, theta + PI))
    even = gabor_raw(GaborParams(0.0, sigma, theta))
    even2 = gabor_raw(GaborParams(0.0, sigma, theta + PI))
    assert np.max(np.abs(odd2 + odd)) < 1e-10
    assert np.max(np.abs(even2 - even)) < 1e-10


def test_bank_sizes_and_order():
    bank = make_bank(DEFAULT_SCALES[:4])
    assert len(bank) == 256
    assert len(make_bank(DEFAULT_SCALES)) == 384
    assert bank[0].params.phi == 0 and bank[0].params.theta == 0
    assert bank[1].params.theta == pytest.approx(PI / 32)
    assert bank[32].params.sigma == 0.75
    assert bank[128].params.phi == pytest.approx(PI / 2)
    assert all(0 <= k.params.theta < PI for k in bank)


def test_bank_errors():
    with pytest.raises(InvalidScale):
        make_bank([])
    with pytest.raises(InvalidScale):
        make_gabor(GaborParams(0, 0.0, 0))
    with pytest.raises(InvalidScale):
        GaborParams(0, -1.0, 0)


def test_dct_dc_basis():
    np.testing.assert_allclose(dct_basis(0, 0).weights, np.full((8, 8), 1 / 8), atol=1e-15)


def test_dct_odd_row_frequency_antisymmetric():
    w = dct_basis(1, 0).weights
    np.testing.assert_allclose(w, -np.flipud(w), atol=1e-15)


def test_dct_orthonormal():
    basis = np.stack([dct_basis(i, j).weights.ravel() for i in range(8) for j in range(8)])
    np.testing.assert_allclose(basis @ basis.T, np.eye(64), atol=1e-13)


@pytest.mark.parametrize("i,j", [(i, j) for i in range(8) for j in range(8)])
def test_dct_parity(i, j):
    w = dct_basis(i, j).weights
    assert (symmetric_ud(w) if i % 2 == 0 else antisymmetric_ud(w))
    assert (symmetric_lr(w) if j % 2 == 0 else antisymmetric_lr(w))


@pytest.mark.parametrize("i,j", [(-1, 0), (8, 0), (0, 8)])
def test_dct_index_errors(i, j):
    with pytest.raises(IndexOutOfRange):
        dct_basis(i, j)


def test_bank_csv():
    bank = make_bank([1.0])
    text = bank_to_csv(bank).splitlines()
    assert len(text) == 64 * 9
    rows = [list(map(float, line.split(","))) for line in text[1:9]]
    np.testing.assert_array_equal(np.array(rows), bank[0].weights)
