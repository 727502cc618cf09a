"""
Tests for the Transverse Dimension

The pure family with lambda_s = 1/3 is the middle-thirds horseshoe: every
prime has dilatation log 3, so the transfer operator, the Gibbs measure and
the theta series all have closed forms.
"""

import math

import pytest

from horseshoe.core.exceptions import BracketFailure, TruncationTooCoarse
from horseshoe.core.run_config import BudgetConfig, FamilyConfig, TruncationConfig
from horseshoe.services.dimension import (
    ChainCatalog,
    dilatation,
    gibbs_measure,
    pressure_curve,
    rooted_dimension,
    solve_dimension,
    theta_series,
    transfer_matrix,
    weighted_children_sum,
)
from horseshoe.services.family import make_family
from horseshoe.services.params import IntervalTree
from horseshoe.services.rclass import init_class

LOG2_LOG3 = math.log(2.0) / math.log(3.0)


@pytest.fixture(scope="module")
def third_class(third_family):
    """Middle-thirds class down to n = 6."""
    root = IntervalTree(third_family.eps0, third_family.config.tau, 1).root
    return init_class(third_family, root, BudgetConfig(n_max=6))


@pytest.fixture
def truncation():
    return TruncationConfig(m_trunc=4)


def test_dilatation_of_a_letter(third_family):
    """Test that an affine letter contracting by 1/3 has dilatation log 3."""
    b = dilatation(third_family.transition_map(1, 2))
    assert b == pytest.approx(math.log(3.0), abs=1e-12), \
        f"Dilatation should be log 3, got {b}"


def test_chain_catalog(third_class, truncation):
    """
    Test the prime chains of the pure class.

    What we're testing:
    - primes are the four letters
    - there are 2 * 2^4 chains of depth 4
    """
    catalog = ChainCatalog(third_class, truncation)
    assert sorted(p.key for p in catalog.primes) == ["1.1", "1.2", "2.1", "2.2"], \
        "Primes of a pure class are its letters"
    assert len(catalog.at_depth(4)) == 32, \
        "Chains of four letters from two start symbols"
    assert catalog.birkhoff(("1.2", "2.2")) == pytest.approx(2.0 * math.log(3.0), abs=1e-12), \
        "Birkhoff sums add the dilatations"


def test_middle_thirds_dimension(third_class, truncation):
    """
    Test that lambda_d = 1 at d = log 2 / log 3.

    What we're testing:
    - the dimension matches the closed form to 1e-6
    - lambda_d is strictly decreasing and the eigenvector is flat

    Why this matters:
    - Exact oracle for the transfer-operator pipeline
    """
    result = solve_dimension(third_class, truncation)
    assert result.d_s == pytest.approx(LOG2_LOG3, abs=1e-6), \
        f"d_s should be 0.630930, got {result.d_s}"
    assert result.monotone, \
        "lambda_d should decrease strictly"
    assert result.eigenvector_ratio == pytest.approx(1.0, abs=1e-6), \
        "Uniform weights give a constant eigenvector"
    assert result.states == 32, \
        "One state per depth-4 chain"


def test_eigenvalue_closed_form(third_class, truncation):
    """Test lambda_d = 2 * 3^-d."""
    T = transfer_matrix(third_class, truncation)
    for d in (0.3, 0.6, 1.0):
        assert T.eigenvalue(d) == pytest.approx(2.0 * 3.0 ** -d, rel=1e-9), \
            f"Eigenvalue at d={d} should be 2 * 3^-d"


def test_bracket_must_straddle_one(third_class, truncation):
    with pytest.raises(BracketFailure):
        solve_dimension(third_class, truncation, bracket=(0.7, 1.5))


def test_truncation_too_coarse(third_class):
    """Test that a w_min above every depth-2 chain leaves no states."""
    with pytest.raises(TruncationTooCoarse):
        transfer_matrix(third_class, TruncationConfig(m_trunc=4, w_min=0.2))


def test_rooted_dimension(third_class):
    d = rooted_dimension(third_class, base=1, depth=4)
    assert d == pytest.approx(LOG2_LOG3, abs=1e-9), \
        "Rooted partition function should vanish at log 2 / log 3"


def test_gibbs_measure(third_class, truncation):
    """
    Test additivity and the Gibbs bound of the equilibrium measure.

    What we're testing:
    - depth-1 cylinders carry total mass 1 per base rectangle
    - mu(P) / |P|^d_s is 1 on every cylinder
    - the invariant mass splits evenly between the two rectangles
    """
    table = gibbs_measure(third_class, LOG2_LOG3, truncation)
    assert table.normalization == pytest.approx({1: 0.5, 2: 0.5}, rel=1e-9), \
        f"Symmetric rectangles share the invariant mass, got {table.normalization}"
    assert table.additivity_error <= 1e-12, \
        f"Additivity error {table.additivity_error}"
    assert table.gibbs_constant == pytest.approx(1.0, abs=1e-9), \
        f"Gibbs constant should be 1, got {table.gibbs_constant}"
    depths = {depth for _, depth, _, _ in table.rows}
    assert depths == {1, 2, 3, 4}, \
        "Rows should cover every depth up to m_trunc"


def test_gibbs_jacobian_identity(third_class, truncation):
    """
    Test that the Gibbs weights come from the Perron vectors with Jacobian exp(-d_s b).

    What we're testing:
    - the adjoint iteration gives M nu = lambda nu
    - one step longer cylinders weighted by exp(-d_s b) h / (lambda h) reproduce
      mu on both ends of every transition

    Why this matters:
    - Normalizing Birkhoff weights per rectangle ignores the eigenfunction and
      breaks shift invariance as soon as the dilatation varies
    """
    T = transfer_matrix(third_class, truncation)
    lam, nu = T.dominant(LOG2_LOG3, left=True)
    assert abs(T.matrix(LOG2_LOG3) @ nu - lam * nu).max() <= 1e-12, \
        "Left Perron vector should satisfy M nu = lambda nu"
    table = gibbs_measure(third_class, LOG2_LOG3, truncation)
    assert table.jacobian_error <= 1e-10, \
        f"Jacobian identity violated by {table.jacobian_error}"


def test_rooted_dimension_is_base_independent(third_class):
    """Test that the partition functions rooted in either rectangle vanish at the same d."""
    d1 = rooted_dimension(third_class, base=1, depth=4)
    d2 = rooted_dimension(third_class, base=2, depth=4)
    assert abs(d1 - d2) <= 1e-6, \
        f"Rooted dimensions disagree: {d1} vs {d2}"


@pytest.fixture(scope="module")
def perturbed_class():
    """Default family with a 0.02 quadratic perturbation on every branch, words up to n = 8."""
    fam = make_family(FamilyConfig(nonlinearity=0.02))
    root = IntervalTree(fam.eps0, fam.config.tau, 1).root
    return init_class(fam, root, BudgetConfig(n_max=8))


@pytest.mark.slow
def test_perturbed_gibbs_constant(perturbed_class):
    """
    Test the Gibbs bound when the dilatation is no longer constant.

    What we're testing:
    - mu(P) / |P|^d_s stays within [1/10, 10] on every cylinder to depth 8
    - the Jacobian identity and additivity still hold

    Why this matters:
    - The constant model has C = 1 by symmetry; only a perturbed model tests the bound
    """
    truncation = TruncationConfig(m_trunc=8)
    result = solve_dimension(perturbed_class, truncation)
    table = gibbs_measure(perturbed_class, result.d_s, truncation)
    assert max(depth for _, depth, _, _ in table.rows) == 8, \
        "Rows should reach depth 8"
    assert table.gibbs_constant <= 10.0, \
        f"Gibbs constant {table.gibbs_constant} above 10"
    assert table.jacobian_error <= 1e-6, \
        f"Jacobian identity violated by {table.jacobian_error}"
    assert table.additivity_error <= 1e-12, \
        f"Additivity error {table.additivity_error}"


def test_theta_series_closed_form(third_class):
    """
    Test the theta series of the whole class at s = 1.

    What we're testing:
    - generation k sums to (2/3)^k
    - partial sum plus geometric tail equals sum (2/3)^k = 2
    """
    root = third_class.get("1")
    series = theta_series(third_class, root, 1.0)
    assert series.generations == pytest.approx([(2.0 / 3.0) ** k for k in range(1, 7)], rel=1e-9), \
        "Generations should be powers of 2/3"
    assert series.partial_sum + series.tail == pytest.approx(2.0, rel=1e-9), \
        "Series should sum to 2"
    assert series.convergent, \
        "s = 1 lies above d_s0"


def test_theta_series_to_depth(third_class):
    root = third_class.get("1")
    series = theta_series(third_class, root, 1.0, depth=8)
    expected = (2.0 / 3.0) ** 7 + (2.0 / 3.0) ** 8
    assert series.tail == pytest.approx(expected, rel=1e-9), \
        "Tail should cover the two missing generations"


def test_weighted_children_sum(third_class):
    """Test the kappa-weighted sum over the second generation below the identity."""
    result = weighted_children_sum(third_class, third_class.get("1"), kappa=0.5, d_minus=0.6, m=2)
    assert result.count == 4, \
        "Four grandchildren"
    assert result.total == pytest.approx(4 * 9.0 ** -0.6 * 0.25, rel=1e-9), \
        "Each grandchild weighs (1/9)^0.6 kappa^2"
    with pytest.raises(ValueError):
        weighted_children_sum(third_class, third_class.get("1"), kappa=1.5, d_minus=0.6, m=2)


def test_base_point_does_not_move_dimension(third_class, truncation):
    """Test that moving the dilatation base point to the quarter height leaves d_s unchanged."""
    centre = solve_dimension(third_class, truncation)
    quarter = solve_dimension(third_class, truncation, base_point=0.25)
    assert abs(centre.d_s - quarter.d_s) < 1e-3, \
        f"Base point moved d_s from {centre.d_s} to {quarter.d_s}"


def test_pressure_curve_decreases(third_class, truncation):
    T = transfer_matrix(third_class, truncation)
    curve, monotone = pressure_curve(T, [0.1 * k for k in range(1, 11)])
    assert monotone, \
        "lambda_d should decrease strictly in d"
    assert curve[-1][1] == pytest.approx(2.0 / 3.0, rel=1e-9), \
        "lambda_1 = 2/3"
