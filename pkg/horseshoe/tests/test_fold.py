"""
Tests for the Fold and Parabolic Composition

The linear instance (F0, F1 linear with contraction 0.3 around the model fold)
has closed-form corner displacements delta = t - 0.6, which makes the
parabolic width law exact.
"""

import numpy as np
import pytest

from horseshoe.core.exceptions import FamilyNotMonotone, NoIntersection, PC1Violated, PC2Violated
from horseshoe.services.affine import ImplicitMap, square_chart
from horseshoe.services.fold import (
    CurveFamily,
    FoldGeometry,
    check_parabolic_estimates,
    displacement,
    fold_line_intersections,
    lipschitz_recursion_check,
    lipschitz_recursion_fit,
    make_model_fold,
    parabolic_compose,
    tangency_deviation,
    tangency_functional,
    verify_parabolic_calculus,
)
from horseshoe.services.suites import fold_instances, linear_fold_instance, linear_map


@pytest.fixture(scope="module")
def linear_pair():
    inst = linear_fold_instance()
    return inst, parabolic_compose(inst.F0, inst.G, inst.F1)


def test_model_fold_normalization():
    """
    Test that theta(0, 0, t) = t, d theta / dt = 1 and theta_y stays away from 0.

    Why this matters:
    - The unfolding is parametrized by the displacement itself
    """
    G = make_model_fold(FoldGeometry(chi="cubic"), 0.5)
    inv = G.check_invariants()
    assert inv["theta_origin_error"] < 1e-14, \
        "theta(0, 0) should equal t"
    assert inv["theta_t_error"] < 1e-6, \
        "theta should move with unit speed in t"
    assert inv["min_abs_theta_y"] >= 1.0 - 1e-12, \
        "theta_y should be -1 everywhere"


def test_fold_line_intersections():
    """
    Test that a horizontal line folds onto a parabola crossing vertical lines twice or not at all.

    What we're testing:
    - x_s = t - y0 - x_u^2 meets {x_s = 0} twice for t = 0.5, y0 = 0
    - and misses {x_s = 0.6}
    """
    G = make_model_fold(FoldGeometry(), 0.5)
    assert fold_line_intersections(G, 0.0, 0.0) == 2, \
        "Inside the tongue the fold image crosses twice"
    assert fold_line_intersections(G, 0.0, 0.6) == 0, \
        "Beyond the tip there is no crossing"


def test_linear_displacements(linear_instance):
    """
    Test the corner displacements of the linear instance.

    What we're testing:
    - delta = t - 0.6 at the worst corner and t + 0.6 at the best one
    - the four displacements are ordered
    """
    quad = displacement(linear_instance.F0, linear_instance.G, linear_instance.F1)
    assert quad.delta == pytest.approx(0.4, abs=1e-9), \
        f"delta should be 0.4, got {quad.delta}"
    assert quad.delta_LR == pytest.approx(1.6, abs=1e-9), \
        f"delta_LR should be 1.6, got {quad.delta_LR}"
    assert quad.is_ordered(), \
        "delta <= delta_L, delta_R <= delta_LR"


def test_displacement_over_parameter_grid(linear_instance):
    """Test that displacements are monotone in t along a grid."""
    quads = displacement(linear_instance.F0, linear_instance.G, linear_instance.F1, t=[0.8, 0.9, 1.0])
    deltas = [q.delta for q in quads]
    assert deltas == pytest.approx([0.2, 0.3, 0.4], abs=1e-9), \
        f"delta should track t - 0.6, got {deltas}"


def test_linear_parabolic_width_law(linear_pair):
    """
    Test that |P+-| = 0.5 |P0||P1| / sqrt(delta) for the linear instance.

    What we're testing:
    - Both P ratios equal 0.5
    - The width constant is 2

    Why this matters:
    - Exact oracle for the square-root scaling of parabolic widths
    """
    inst, pair = linear_pair
    estimates = check_parabolic_estimates(pair, inst.F0, inst.F1)
    for name in ("P+", "P-"):
        assert estimates.ratios[name] == pytest.approx(0.5, abs=1e-6), \
            f"{name} ratio should be 0.5, got {estimates.ratios[name]}"
    assert estimates.width_constant == pytest.approx(2.0, abs=1e-5), \
        "Width constant should be 2"


def test_branches_are_ordered(linear_pair):
    """Test that W+ > W- on the whole rectangle and the branches are affine-like maps."""
    _, pair = linear_pair
    ys, xs = pair.functional.rect.interior_points()
    assert np.all(pair.W_plus(ys, xs) > pair.W_minus(ys, xs)), \
        "W+ should lie above W-"
    assert isinstance(pair.plus, ImplicitMap) and isinstance(pair.minus, ImplicitMap), \
        "Branches should be implicit maps"


def test_tangency_shape(linear_pair):
    """
    Test that C_w ~ 2w and C_ww ~ 2 near the tongue.

    Why this matters:
    - The quadratic shape is what makes the two roots W+- well separated
    """
    _, pair = linear_pair
    dw, dww = tangency_deviation(pair.functional)
    assert dw < 0.05 and dww < 0.05, \
        f"Tangency deviations too large: {dw}, {dww}"


def test_small_displacement_is_rejected(linear_instance):
    """
    Test the PC2 guard.

    What we're testing:
    - delta = 0.2 is below 0.5 (|P1| + |Q0|) = 0.3 and raises PC2Violated
    - the same instance composes when the guard is off
    """
    inst = linear_fold_instance(t=0.8)
    with pytest.raises(PC2Violated):
        parabolic_compose(inst.F0, inst.G, inst.F1, enforce_pc2=True)
    pair = parabolic_compose(inst.F0, inst.G, inst.F1, enforce_pc2=False, with_calculus=False)
    assert pair.displacement.delta == pytest.approx(0.2, abs=1e-9), \
        "Unguarded composition keeps delta"


def test_tangency_inside_rectangle_is_rejected():
    """Test that a negative worst-corner displacement raises PC2Violated."""
    inst = linear_fold_instance(t=0.5)
    with pytest.raises(PC2Violated):
        parabolic_compose(inst.F0, inst.G, inst.F1)


def test_missing_curves_raise_no_intersection():
    """Test that delta_LR <= 0 raises NoIntersection."""
    inst = linear_fold_instance(t=-0.7)
    with pytest.raises(NoIntersection):
        parabolic_compose(inst.F0, inst.G, inst.F1)


def test_unadapted_maps_are_rejected():
    """
    Test the PC1 guard on |A1_y|.

    Why this matters:
    - The functional's quadratic shape needs the maps nearly aligned with the fold
    """
    G = make_model_fold(FoldGeometry(), 1.0)
    F0 = linear_map(square_chart("a0"), G.source)
    F1 = ImplicitMap.from_functions(lambda y, x: 0.3 * x + 0.2 * y, lambda y, x: 0.3 * y,
                                    G.target, square_chart("a1"), degrees=(1, 1))
    with pytest.raises(PC1Violated):
        tangency_functional(F0, G, F1)


def test_perturbed_instances_satisfy_parabolic_estimates():
    """
    Test width laws, calculus and tangency on seeded perturbed instances.

    What we're testing:
    - Estimates stay under the ceiling
    - Analytic branch derivatives match the refit branches
    """
    for inst in fold_instances(seed=11, size=2):
        pair = parabolic_compose(inst.F0, inst.G, inst.F1)
        estimates = check_parabolic_estimates(pair, inst.F0, inst.F1)
        assert estimates.passed, \
            f"Estimates flagged: {estimates.flagged}"
        reports = verify_parabolic_calculus(pair)
        assert all(r.passed for r in reports.values()), \
            f"Branch calculus flagged: {[r.flagged for r in reports.values()]}"


def test_lipschitz_recursion_for_linear_map():
    """
    Test that an exponential family of slope T pulls back to slope 0.3 T.

    Why this matters:
    - The affine recursion T' = a T + C controls the unstable foliation
    """
    F = linear_map(square_chart("b0"), square_chart("b1"))
    a, c = lipschitz_recursion_fit(F)
    assert a == pytest.approx(0.3, abs=1e-6), \
        f"Recursion slope should be 0.3, got {a}"
    assert c == pytest.approx(0.0, abs=1e-6), \
        f"Recursion offset should vanish, got {c}"


def test_non_monotone_family_is_rejected():
    """Test that d phi / ds changing sign raises FamilyNotMonotone."""
    F = linear_map(square_chart("b0"), square_chart("b1"))
    family = CurveFamily(
        phi=lambda y, s: s * y,
        phi_s=lambda y, s: y + 0.0 * s,
        phi_y=lambda y, s: s + 0.0 * y,
        s_range=(-0.1, 0.1),
    )
    with pytest.raises(FamilyNotMonotone):
        lipschitz_recursion_check(F, family)
