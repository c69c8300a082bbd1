import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import beta

from stablelab.quadrature import gauss_legendre, power_product_rule, singular_rule, wynn_epsilon


def test_gauss_legendre_polynomials():
    x, w = gauss_legendre(-1.0, 2.0, 8)
    assert np.sum(w * x ** 15) == pytest.approx((2.0 ** 16 - 1.0) / 16, rel=1e-13)


@given(st.floats(-0.9, 0.5), st.floats(-0.9, 0.5))
def test_singular_rule_beta(a, b):
    y, w = singular_rule(0.0, 1.0, a, b)
    assert np.sum(w) == pytest.approx(beta(a + 1, b + 1), rel=1e-9)


def test_power_product_rule_interior_point():
    # int_{-1}^{1} |y|^{-1/2} dy = 4
    y, w = power_product_rule(-1.0, 1.0, [0.0], [-0.5])
    assert np.sum(w) == pytest.approx(4.0, rel=1e-12)


def test_wynn_accelerates_alternating_series():
    k = np.arange(30)
    partial = np.cumsum((-1.0) ** k / (2 * k + 1))
    limit, err = wynn_epsilon(partial)
    assert limit == pytest.approx(math.pi / 4, abs=1e-10)
