"""Parity between the compiled kernels and the numpy fallback."""

import numpy as np
import pytest

from phsearch import numerics as nm
from phsearch.vit import forward

needs_cython = pytest.mark.skipif(
    "cython" not in nm.available_backends(), reason="compiled kernels not built"
)


@pytest.fixture
def both_backends():
    previous = nm.active_backend()
    yield
    nm.set_backend(previous)


@needs_cython
def test_matmul_bitwise_identical(both_backends, rng):
    a = rng.normal(size=(23, 17))
    b = rng.normal(size=(17, 29))
    nm.set_backend("cython")
    fast = nm.matmul(a, b)
    nm.set_backend("python")
    slow = nm.matmul(a, b)
    assert np.array_equal(fast, slow)


@needs_cython
@pytest.mark.parametrize("op", ["softmax", "layer_norm", "gelu"])
def test_elementwise_kernels_agree(both_backends, rng, op):
    m = rng.normal(scale=3.0, size=(11, 13))
    gamma, beta = rng.normal(size=13), rng.normal(size=13)

    def run():
        if op == "softmax":
            return nm.softmax_rows(m)
        if op == "layer_norm":
            return nm.layer_norm_rows(m, gamma, beta, 1e-6)
        return nm.gelu(m)

    nm.set_backend("cython")
    fast = run()
    nm.set_backend("python")
    slow = run()
    assert np.max(np.abs(fast - slow)) <= 1e-12


@needs_cython
def test_forward_pass_agrees(both_backends, toy_weights, toy_image):
    nm.set_backend("cython")
    fast, _ = forward(toy_image, toy_weights)
    nm.set_backend("python")
    slow, _ = forward(toy_image, toy_weights)
    assert np.max(np.abs(fast - slow)) <= 1e-9


def test_backend_switching_round_trip():
    original = nm.active_backend()
    for name in nm.available_backends():
        assert nm.set_backend(name) in nm.available_backends()
    nm.set_backend(original)
    assert nm.active_backend() == original
