"""
Tests for Affine-Like Maps and Simple Composition

Covers widths, the identity and inverse, the cone condition, the width law
and the analytic composition calculus on seeded random pairs.
"""

from dataclasses import replace

import numpy as np
import pytest

from horseshoe.core.exceptions import ChartMismatch
from horseshoe.services.affine import (
    ConeParams,
    ImplicitMap,
    check_cone,
    measured_composition_constants,
    simple_compose,
    square_chart,
    verify_composition_calculus,
)
from horseshoe.services.suites import SUITE_CONE, cone_pairs, linear_map


@pytest.fixture
def charts():
    return square_chart("c0"), square_chart("c1"), square_chart("c2")


@pytest.fixture(scope="module")
def suite():
    """Ten seeded cone-satisfying pairs and their composites."""
    return [(F, Fp, simple_compose(F, Fp)) for F, Fp in cone_pairs(seed=3, size=10)]


def test_linear_widths(charts):
    """
    Test that A = 0.3 x1, B = 0.3 y0 has |P| = |Q| = 0.3.

    Why this matters:
    - Widths are the lengths every budget and bound is measured in
    """
    F = linear_map(charts[0], charts[1])
    p, q = F.widths()
    assert p == pytest.approx(0.3, abs=1e-12), \
        "|P| should equal the x-contraction"
    assert q == pytest.approx(0.3, abs=1e-12), \
        "|Q| should equal the y-contraction"


def test_linear_width_law_is_exact(charts):
    """
    Test that |P''| = |P||P'| exactly for linear pairs.

    What we're testing:
    - The width ratio of the composite is 1 to 1e-10
    - The composite stays affine
    """
    F, Fp = linear_map(charts[0], charts[1]), linear_map(charts[1], charts[2])
    Fpp = simple_compose(F, Fp)
    ratio = measured_composition_constants(F, Fp, Fpp)["width_ratio"]
    assert abs(ratio - 1.0) < 1e-10, \
        f"Linear width ratio should be 1, got {ratio}"
    assert Fpp.is_affine, \
        "Affine operands should give an affine composite"


def test_identity_is_neutral(charts):
    """Test that composing with the identity leaves the fields unchanged."""
    F = linear_map(charts[0], charts[1])
    G = simple_compose(ImplicitMap.identity(charts[0]), F)
    y, x = np.array([-0.5, 0.2, 0.9]), np.array([0.3, -0.7, 0.1])
    assert np.allclose(G.A(y, x), F.A(y, x), atol=1e-12), \
        "A should be unchanged"
    assert np.allclose(G.B(y, x), F.B(y, x), atol=1e-12), \
        "B should be unchanged"


def test_inverse_swaps_widths(suite):
    """Test that the inverse representation has widths (|Q|, |P|)."""
    F = suite[0][0]
    p, q = F.widths()
    pi, qi = F.inverse().widths()
    assert (pi, qi) == pytest.approx((q, p), rel=1e-8), \
        "Inverse widths should be swapped"


def test_chart_mismatch_is_rejected(charts):
    """
    Test that maps whose charts do not chain cannot be composed.

    Why this matters:
    - Composing across the wrong rectangle would silently produce garbage
    """
    F = linear_map(charts[0], charts[1])
    with pytest.raises(ChartMismatch):
        simple_compose(F, F)


def test_forward_evaluation_solves_the_implicit_system(suite):
    """Test that forward() returns (x1, y1) with A(y0, x1) = x0 and y1 = B(y0, x1)."""
    F = suite[1][0]
    y0 = np.array([-0.3, 0.0, 0.8])
    expected = np.array([-0.5, 0.1, 0.6])
    x0 = F.A(y0, expected)
    x1, y1 = F.forward(x0, y0)
    assert np.allclose(x1, expected, atol=1e-10), \
        "Forward evaluation should recover x1"
    assert np.allclose(y1, F.B(y0, x1), atol=1e-14), \
        "y1 should be B(y0, x1)"


def test_composites_satisfy_upgraded_cone(suite):
    """
    Test that composites of cone maps satisfy the cone with lam squared.

    What we're testing:
    - check_cone(F'', (lam^2, u, v)) passes on every suite pair

    Why this matters:
    - Expansion improves under composition; deep elements rely on it
    """
    cone = SUITE_CONE.squared()
    for F, Fp, Fpp in suite:
        report = check_cone(Fpp, cone)
        assert report.passed, \
            f"Composite should satisfy the squared cone (margin {report.margin})"


def test_cone_parameters_are_validated():
    """Test that apertures with u v > lam^2 are rejected."""
    with pytest.raises(ValueError):
        ConeParams(lam=1.0, u=2.0, v=2.0)


def test_width_law_and_distortion_constants(suite):
    """Test that the measured width-law constant stays in [0.1, 10] on the suite."""
    for F, Fp, Fpp in suite:
        measured = measured_composition_constants(F, Fp, Fpp)
        assert 0.1 <= measured["width_ratio"] <= 10.0, \
            f"Width ratio out of range: {measured['width_ratio']}"
        assert measured["distortion_constant"] <= 10.0, \
            f"Distortion growth constant too large: {measured['distortion_constant']}"


def test_composition_calculus_matches_refit_fields(suite):
    """
    Test that the analytic derivative formulas agree with the refit composite.

    What we're testing:
    - All ten formulas agree to relative error 1e-5 on every pair

    Why this matters:
    - These formulas drive the distortion and cone bounds of every composite
    """
    for F, Fp, Fpp in suite:
        report = verify_composition_calculus(F, Fp, Fpp)
        assert report.passed, \
            f"Calculus discrepancies: {report.discrepancies}"


def test_corrupted_formula_is_named(suite):
    """
    Test that perturbing one stored formula flags exactly that formula.

    Why this matters:
    - The verification harness must localize a broken formula
    """
    F, Fp, Fpp = suite[0]
    broken = replace(Fpp, calculus=Fpp.calculus.corrupted("A_y", delta=1e-2))
    report = verify_composition_calculus(F, Fp, broken)
    assert report.flagged == ["A_y"], \
        f"Only A_y should be flagged, got {report.flagged}"
