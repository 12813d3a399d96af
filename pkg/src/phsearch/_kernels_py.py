"""NumPy implementations of the dense kernels (fallback backend).

matmul uses einsum with ``optimize=False``: each output element accumulates
over the inner index sequentially, so a row of a product depends only on the
matching row of the left operand.  The compiled backend keeps the same
accumulation order.  The two backends agree to the last few ulps but are not
bit-identical (vectorized exp/erf differ from libm), so cross-backend
comparisons belong at ~1e-12, never at the bit level.
"""

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)

NAME = "python"


def matmul(a, b):
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layer_norm_rows(m, gamma, beta, eps):
    mean = m.mean(axis=1, keepdims=True)
    var = np.square(m - mean).mean(axis=1, keepdims=True)
    return (m - mean) / np.sqrt(var + eps) * gamma + beta


def gelu_flat(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))
