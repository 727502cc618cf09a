"""
Tests for the Parameter Space

Interval tree scales, the exponent calculus, the (H4) region and the
bicritical budgets.
"""

import math

import pytest
from hypothesis import given, settings as hsettings
from hypothesis import strategies as st

from horseshoe.core.exceptions import ConfigError, ConventionViolated, TooFewCandidates
from horseshoe.services.params import (
    IntervalTree,
    ParamInterval,
    bicritical_budget,
    budget_sweep,
    check_H4,
    exponents,
    h4_region,
    resolve_intervals,
)


@pytest.fixture
def tree():
    return IntervalTree(0.02, 0.25, 3)


def test_level_lengths(tree):
    """
    Test eps_k = eps0^((1 + tau)^k).

    What we're testing:
    - eps_1 = 0.02^1.25 and eps_2 = 0.02^1.5625
    - log-lengths are exact multiples of log eps0
    """
    lengths = tree.level_lengths()
    assert lengths[0] == pytest.approx(0.02, rel=1e-14), \
        "Root length should be eps0"
    assert lengths[1] == pytest.approx(0.02 ** 1.25, rel=1e-12), \
        "Level 1 length should be eps0^1.25"
    assert lengths[2] == pytest.approx(0.02 ** 1.5625, rel=1e-12), \
        "Level 2 length should be eps0^1.5625"


def test_children_tile_from_the_left(tree):
    """
    Test that the root splits into floor(eps0^-tau) = 2 contiguous children.

    Why this matters:
    - The discarded remainder sits at the right end and is never selected
    """
    kids = tree.root.children()
    assert len(kids) == 2, \
        f"Root should have 2 candidates, got {len(kids)}"
    assert kids[0].t_lo == pytest.approx(0.02, abs=1e-16), \
        "First child starts at eps0"
    assert kids[0].t_hi == pytest.approx(kids[1].t_lo, abs=1e-16), \
        "Children are contiguous"
    assert tree.root.discarded == pytest.approx(0.02 - 2 * 0.02 ** 1.25, rel=1e-10), \
        "Remainder should be eps0 - 2 eps1"
    assert all(tree.root.contains(k) for k in kids), \
        "Children lie inside their parent"


def test_candidate_counts(tree):
    assert tree.level_candidates(0) == 2, \
        "eps0^-tau = 2.66 floors to 2"
    assert tree.level_candidates(1) == 3, \
        "eps1^-tau = 3.40 floors to 3"
    assert tree.nodes_at_level(2) == 6, \
        "Two then three children"


def test_path_and_leaf(tree):
    path = tree.path([1, 2])
    assert [p.level for p in path] == [0, 1, 2], \
        "Path should list root to leaf"
    assert path[-1].path == (1, 2), \
        "Leaf should remember its indices"
    with pytest.raises(IndexError):
        tree.leaf([5])
    with pytest.raises(ValueError):
        tree.path([0, 0, 0, 0])


def test_too_few_candidates_warns():
    """Test that an interval with fewer than two candidates warns."""
    node = ParamInterval(0, 0.5, 1.0, 0.25, 0.5)
    with pytest.warns(TooFewCandidates):
        node.children()


def test_resolve_intervals():
    """
    Test interval resolution for paths and explicit parameter values.

    What we're testing:
    - a path gives root plus one interval per index
    - an explicit t gives one zero-length interval
    - both together are rejected
    """
    path = resolve_intervals(0.02, 0.25, [0])
    assert len(path) == 2 and path[-1].t_lo == pytest.approx(0.02), \
        "Path [0] should end in the first child"
    single = resolve_intervals(0.02, 0.25, t=0.03)
    assert len(single) == 1 and single[0].length == 0.0 and single[0].midpoint == 0.03, \
        "Explicit t should be a zero-length interval"
    with pytest.raises(ValueError):
        resolve_intervals(0.02, 0.25, [0], t=0.03)


def test_zero_length_interval_has_no_candidates():
    """
    Test that the interval of an explicit t reports zero candidates.

    What we're testing:
    - candidate_count is 0 and discarded is 0.0, so to_dict works
    - subdividing it is a configuration error, not a ZeroDivisionError

    Why this matters:
    - build summaries and class headers serialize the interval of every run
    """
    single = resolve_intervals(0.02, 0.25, t=0.03)[0]
    assert single.candidate_count == 0 and single.discarded == 0.0, \
        "A zero-length interval has no candidates"
    doc = single.to_dict()
    assert doc["candidates"] == 0 and doc["length"] == 0.0, \
        f"Summary should record zero length and candidates, got {doc}"
    with pytest.raises(ConfigError):
        single.children()
    with pytest.raises(ConfigError):
        single.child(0)


def test_exponents_at_reference_point():
    """
    Test the exponent calculus at d_s0 = d_u0 = 0.55.

    What we're testing:
    - rho1 = 0.325, sigma0 = 0.45, sigma1 = 0
    - beta_max = 0.495 / 0.3575
    """
    exps = exponents(0.55, 0.55)
    assert exps.rho1 == pytest.approx(0.325, abs=1e-12), \
        "rho1 should be 0.325"
    assert exps.sigma0 == pytest.approx(0.45, abs=1e-12), \
        "sigma0 should be 0.45"
    assert exps.sigma1 == pytest.approx(0.0, abs=1e-12), \
        "sigma1 vanishes for equal dimensions"
    assert exps.beta_max == pytest.approx(0.495 / 0.3575, rel=1e-12), \
        f"beta_max should be 1.384615, got {exps.beta_max}"
    assert exps.h4, \
        "(H4) holds at (0.55, 0.55)"


@hsettings(max_examples=50, deadline=None)
@given(
    d_s=st.floats(min_value=0.51, max_value=0.99),
    frac=st.floats(min_value=0.0, max_value=1.0),
)
def test_beta_max_identity(d_s, frac):
    """
    Test (sigma0 + sigma1) / rho1 = beta_max wherever both are defined.

    Why this matters:
    - The budget crossover and the regularity threshold are the same exponent
    """
    d_u = (1.0 - d_s) + 1e-3 + frac * (2.0 * d_s - 1.0 - 1e-3)
    d_u = min(d_u, d_s)
    exps = exponents(d_s, d_u)
    assert exps.x_bar_exponent == pytest.approx(exps.beta_max, rel=1e-10), \
        "x_bar exponent should equal beta_max"


def test_convention_is_enforced():
    """Test that d_s0 < d_u0 raises ConventionViolated."""
    with pytest.raises(ConventionViolated):
        exponents(0.5, 0.6)
    with pytest.raises(ValueError):
        exponents(1.2, 0.5)


def test_h4_region_agrees_with_beta_max():
    """
    Test that (H4) holds exactly where beta_max > 1.

    Why this matters:
    - (H4) is the condition under which the bifurcation has positive density
    """
    rows = h4_region(n=20)
    assert all(r["d_s"] >= r["d_u"] for r in rows), \
        "Rows should respect d_s0 >= d_u0"
    defined = [r for r in rows if r["beta_max"] is not None]
    assert defined, \
        "Some rows should lie above d_s0 + d_u0 = 1"
    for r in defined:
        assert r["h4"] == (r["beta_max"] > 1.0), \
            f"(H4) and beta_max > 1 disagree at ({r['d_s']}, {r['d_u']})"
    assert all(r["beta_max"] is None for r in rows if r["d_s"] + r["d_u"] <= 1.0), \
        "beta_max is undefined below the diagonal"


def test_check_h4_examples():
    assert check_H4(0.55, 0.55), \
        "Thin horseshoes satisfy (H4)"
    assert not check_H4(0.7, 0.7), \
        "Thick horseshoes fail (H4)"


def test_bicritical_budget_regimes():
    """
    Test that the budget switches from B0 to B1 at the crossover scale.

    What we're testing:
    - B = max(B0, B1) in both regimes
    - regime label follows x <= x_cr
    """
    exps = exponents(0.55, 0.55)
    ref = bicritical_budget(1e-6, 1e-3, 1e-3, 0.02, 0.08, exps)
    below = bicritical_budget(0.5 * ref.x_cr, 1e-3, 1e-3, 0.02, 0.08, exps)
    above = bicritical_budget(2.0 * ref.x_cr, 1e-3, 1e-3, 0.02, 0.08, exps)
    assert below.regime == "B0" and above.regime == "B1", \
        "Regime should switch at x_cr"
    for b in (below, above):
        assert b.B == max(b.B0, b.B1), \
            "B should be the larger branch"
    with pytest.raises(ValueError):
        bicritical_budget(0.0, 1e-3, 1e-3, 0.02, 0.08, exps)


def test_budget_sweep_scales():
    exps = exponents(0.55, 0.55)
    rows = budget_sweep(range(10, 13), 1e-3, 1e-3, 0.02, 0.08, exps)
    assert [N for N, _, _ in rows] == [10, 11, 12], \
        "Sweep should follow N"
    assert all(math.isclose(x, 2.0 ** -N) for N, x, _ in rows), \
        "Scales should be dyadic"
