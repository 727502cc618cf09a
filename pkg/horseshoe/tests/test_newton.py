"""
Tests for the Vectorized Newton Solvers
"""

import numpy as np
import pytest

from horseshoe.core.exceptions import NonConvergence, VanishingDerivative
from horseshoe.services.newton import newton_2x2, newton_scalar


def test_scalar_newton_solves_every_node():
    """
    Test square roots of a grid of targets in one call.

    What we're testing:
    - each entry converges to its own root
    - the output keeps the input shape
    """
    targets = np.array([[1.0, 2.0], [3.0, 9.0]])
    x, ok = newton_scalar(lambda x, idx: (x ** 2 - targets.ravel()[idx], 2.0 * x), np.ones((2, 2)))
    assert x.shape == (2, 2) and ok.all(), \
        "Every node should converge"
    assert np.allclose(x, np.sqrt(targets), rtol=1e-14), \
        "Roots should be exact to rounding"


def test_scalar_newton_reports_failed_nodes():
    """
    Test that a zero derivative stops the node and raises with its index.

    Why this matters:
    - Callers translate failed nodes into the domain error (e.g. a vanishing A_x)
    """
    def fun(x, idx):
        return x - 1.0, np.where(idx == 1, 0.0, 1.0)

    with pytest.raises(VanishingDerivative) as info:
        newton_scalar(fun, np.zeros(3), error=VanishingDerivative)
    assert info.value.context["nodes"] == [1], \
        "Only the node with zero derivative should fail"
    x, ok = newton_scalar(fun, np.zeros(3), raise_on_failure=False)
    assert ok.tolist() == [True, False, True], \
        "Mask should mark the failed node"
    assert x[0] == pytest.approx(1.0) and x[2] == pytest.approx(1.0), \
        "Other nodes still converge"


def test_2x2_newton_circle_and_diagonal():
    """Test u^2 + v^2 = r^2, u = v for several radii at once."""
    r = np.array([1.0, 2.0, 0.5])

    def fun(u, v, idx):
        return u ** 2 + v ** 2 - r[idx] ** 2, u - v, 2.0 * u, 2.0 * v, np.ones_like(u), -np.ones_like(v)

    u, v, ok = newton_2x2(fun, np.ones(3), np.full(3, 0.5))
    assert ok.all(), \
        "All systems should converge"
    assert np.allclose(u, r / np.sqrt(2.0), rtol=1e-13) and np.allclose(v, u), \
        "Solution should be (r, r) / sqrt(2)"


def test_2x2_newton_singular_jacobian():
    def fun(u, v, idx):
        return u - 1.0, v - 1.0, np.ones_like(u), np.ones_like(u), np.ones_like(u), np.ones_like(u)

    with pytest.raises(NonConvergence):
        newton_2x2(fun, np.zeros(2), np.zeros(2))
