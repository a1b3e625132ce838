import math

import numpy as np
import pytest

from streamfem.quadrature import interval_rule, triangle_rule


def exact_triangle_monomial(i, j):
    # int_T x^i y^j over the reference triangle
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


@pytest.mark.parametrize("degree", [0, 1, 2, 4, 8, 12])
def test_triangle_rule_exactness(degree):
    rule = triangle_rule(degree)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    assert np.all(rule.weights > 0)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            approx = np.sum(rule.weights * rule.points[:, 0] ** i
                            * rule.points[:, 1] ** j)
            assert approx == pytest.approx(exact_triangle_monomial(i, j),
                                           abs=1e-12)


@pytest.mark.parametrize("npts", [1, 2, 4, 8])
def test_interval_rule_exactness(npts):
    rule = interval_rule(npts)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    for d in range(rule.exactness_degree + 1):
        assert np.sum(rule.weights * rule.points ** d) == \
            pytest.approx(1.0 / (d + 1), abs=1e-12)


def test_points_strictly_inside():
    rule = triangle_rule(8)
    assert np.all(rule.points > 0.0)
    assert np.all(rule.points.sum(axis=1) < 1.0)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        triangle_rule(-1)
    with pytest.raises(ValueError):
        interval_rule(0)
