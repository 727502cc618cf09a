"""
Tests for Spectral Fields

Chebyshev-Lobatto interpolation, spectral derivatives and sup-norms are the
numerical base of every implicit map.
"""

import numpy as np
import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st

from horseshoe.services.fields import Field1, Rect, fit_function, lobatto_nodes, sup_norm


def test_lobatto_nodes_include_endpoints():
    """
    Test that Lobatto nodes are ascending and hit both interval ends.

    What we're testing:
    - First node is lo, last node is hi
    - Nodes are strictly increasing

    Why this matters:
    - Strip boundaries are read off fields restricted to the chart edges
    """
    nodes = lobatto_nodes(8, 0.0, 2.0)
    assert nodes[0] == pytest.approx(0.0, abs=1e-15), \
        "First node should be the lower endpoint"
    assert nodes[-1] == pytest.approx(2.0, abs=1e-15), \
        "Last node should be the upper endpoint"
    assert np.all(np.diff(nodes) > 0), \
        "Nodes should be ascending"


@hsettings(max_examples=25, deadline=None)
@given(
    c=st.lists(st.floats(min_value=-2.0, max_value=2.0), min_size=6, max_size=6),
)
def test_quadratic_fields_are_reproduced_exactly(c):
    """
    Test that a degree (2, 2) fit reproduces any quadratic polynomial.

    What we're testing:
    - Values and the spectral derivatives f_y, f_xx match the polynomial

    Why this matters:
    - The composition calculus is checked against these derivatives
    """
    a0, a1, a2, a3, a4, a5 = c
    rect = Rect(0.0, 1.0, -1.0, 2.0)
    f = fit_function(lambda y, x: a0 + a1 * y + a2 * x + a3 * y * x + a4 * y ** 2 + a5 * x ** 2,
                     rect, (2, 2), check_degree=False)
    y, x = np.array([0.1, 0.5, 0.9]), np.array([-0.5, 0.3, 1.7])
    expected = a0 + a1 * y + a2 * x + a3 * y * x + a4 * y ** 2 + a5 * x ** 2
    assert np.allclose(f(y, x), expected, atol=1e-11), \
        "Field values should match the polynomial"
    assert np.allclose(f.derivative(1, 0)(y, x), a1 + a3 * x + 2 * a4 * y, atol=1e-10), \
        "f_y should match the analytic derivative"
    assert np.allclose(f.derivative(0, 2)(y, x), 2 * a5, atol=1e-9), \
        "f_xx should be constant"


def test_linear_fields_are_affine():
    """
    Test that exactly linear data gives an affine field with degree (1, 1).

    Why this matters:
    - Affine operands must compose to affine composites without refitting error
    """
    f = fit_function(lambda y, x: 0.3 * x - 0.2 * y + 1.0, Rect(0.0, 1.0, 0.0, 1.0), (1, 1))
    assert f.is_affine, \
        "A linear function should give an affine field"
    assert f.degrees == (1, 1), \
        "Linear fields carry degree (1, 1)"


def test_sup_norm_finds_interior_maximum():
    """
    Test that the sup-norm is polished to an interior maximum.

    What we're testing:
    - |1 - (y - 0.37)^2 - (x - 0.61)^2| has its maximum 1 at (0.37, 0.61)
    """
    f = fit_function(lambda y, x: 1.0 - (y - 0.37) ** 2 - (x - 0.61) ** 2, Rect(0.0, 1.0, 0.0, 1.0), (2, 2))
    value, (y, x) = sup_norm(f)
    assert value == pytest.approx(1.0, abs=1e-7), \
        "Maximum should be 1"
    assert (y, x) == pytest.approx((0.37, 0.61), abs=2e-3), \
        "Maximum should be located at the peak"


def test_field1_derivative_of_cubic():
    """Test one-dimensional fits and derivatives on a cubic."""
    f = Field1.fit(lambda v: v ** 3 - v, -1.0, 1.0, 3)
    v = np.linspace(-1.0, 1.0, 7)
    assert np.allclose(f(v), v ** 3 - v, atol=1e-12), \
        "Cubic should be reproduced"
    assert np.allclose(f.derivative()(v), 3 * v ** 2 - 1, atol=1e-11), \
        "Derivative should be 3v^2 - 1"
