import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phsearch import numerics as nm
from phsearch.errors import BadParam, DimensionMismatch

from .oracles import erf_series, naive_matmul

finite_matrices = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(-50, 50, allow_nan=False),
)


class TestMatmul:
    def test_identity_both_sides_bit_exact(self, rng):
        m = rng.normal(size=(3, 3))
        eye = np.eye(3)
        assert np.array_equal(nm.matmul(eye, m), m)
        assert np.array_equal(nm.matmul(m, eye), m)

    def test_hand_case(self):
        out = nm.matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
        assert np.array_equal(out, [[2.0], [4.0]])

    def test_zero_matrix(self, rng):
        m = rng.normal(size=(2, 2))
        assert np.array_equal(nm.matmul(np.zeros((2, 2)), m), np.zeros((2, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            nm.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_matches_naive_loop(self, rng):
        a = rng.normal(size=(5, 7))
        b = rng.normal(size=(7, 4))
        # same accumulation order as the naive loop, so equality is exact
        assert np.array_equal(nm.matmul(a, b), naive_matmul(a, b))


class TestSoftmax:
    def test_symmetric_row(self):
        assert np.allclose(nm.softmax_rows([[0.0, 0.0]]), [[0.5, 0.5]], atol=1e-15)

    def test_saturation_no_overflow(self):
        out = nm.softmax_rows([[1000.0, 0.0]])
        assert np.all(np.isfinite(out))
        assert out[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert out[0, 1] == pytest.approx(0.0, abs=1e-12)

    def test_closed_form(self):
        out = nm.softmax_rows([[math.log(2.0), 0.0]])
        assert out[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert out[0, 1] == pytest.approx(1.0 / 3.0, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(finite_matrices)
    def test_rows_sum_to_one(self, m):
        sums = nm.softmax_rows(m).sum(axis=1)
        assert np.all(np.abs(sums - 1.0) <= 1e-12)

    @settings(max_examples=200, deadline=None)
    @given(finite_matrices, st.floats(-30, 30, allow_nan=False))
    def test_shift_invariance(self, m, shift):
        base = nm.softmax_rows(m)
        shifted = nm.softmax_rows(m + shift)
        assert np.all(np.abs(base - shifted) <= 1e-12)


class TestLayerNorm:
    def test_constant_vector_is_zero(self):
        out = nm.layer_norm(np.full(5, 3.7), np.ones(5), np.zeros(5), eps=1e-6)
        assert np.allclose(out, 0.0, atol=1e-9)

    def test_unit_variance_hand_check(self):
        out = nm.layer_norm([1.0, -1.0], np.ones(2), np.zeros(2), eps=1e-15)
        assert np.allclose(out, [1.0, -1.0], atol=1e-7)

    def test_zero_gamma_gives_beta(self, rng):
        x = rng.normal(size=6)
        beta = rng.normal(size=6)
        out = nm.layer_norm(x, np.zeros(6), beta, eps=1e-6)
        assert np.array_equal(out, beta)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            nm.layer_norm(np.ones(4), np.ones(3), np.zeros(4))

    def test_bad_eps(self):
        with pytest.raises(BadParam):
            nm.layer_norm(np.ones(4), np.ones(4), np.zeros(4), eps=0.0)

    def test_output_statistics(self, rng):
        # variance deviates by eps/var, so the input variance must dwarf eps
        x = rng.normal(scale=100.0, size=(20, 64))
        out = nm.layer_norm_rows(x, np.ones(64), np.zeros(64), eps=1e-6)
        assert np.all(np.abs(out.mean(axis=1)) <= 1e-12)
        assert np.all(np.abs(out.var(axis=1) - 1.0) <= 1e-9)


class TestGelu:
    def test_zero(self):
        assert nm.gelu(np.array([0.0]))[0] == 0.0

    def test_asymptote(self):
        assert abs(nm.gelu(np.array([10.0]))[0] - 10.0) < 1e-9

    def test_phi_of_one_from_series(self):
        expected = 0.5 * (1.0 + erf_series(1.0 / math.sqrt(2.0)))
        assert nm.gelu(np.array([1.0]))[0] == pytest.approx(expected, abs=1e-12)

    def test_shape_preserved(self, rng):
        x = rng.normal(size=(3, 5))
        assert nm.gelu(x).shape == (3, 5)


def test_affine_matches_components(rng):
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    b = rng.normal(size=2)
    assert np.array_equal(nm.affine(x, w, b), nm.matmul(x, w) + b)


def test_ensure_finite_rejects_nan():
    with pytest.raises(BadParam):
        nm.ensure_finite(np.array([1.0, np.nan]), "x")
