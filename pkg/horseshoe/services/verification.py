"""
Verification Suite

Runs the numerical invariants of every layer on seeded inputs and reports
pass/fail with the measured constants:

- composition calculus, cone upgrade, width law and distortion growth on
  random cone-satisfying pairs
- parabolic calculus, width laws and tangency shape on fold instances
- the exact linear-model oracles
- class-level bounds (stretched-exponential widths, uniform cone, bounded
  distortion, prime decomposition, relation algebra, regularity)
- forest envelopes, the exponent identities and the Gibbs constant

`corrupt` names one composition-calculus formula to perturb on the first
pair; the report then fails on exactly that check.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

from horseshoe.core.config import settings
from horseshoe.core.exceptions import HorseshoeError
from horseshoe.core.run_config import RunConfig
from horseshoe.observability.tracing import get_tracer, mark_error
from horseshoe.services.affine import (
    check_cone,
    distortion,
    measured_composition_constants,
    simple_compose,
    square_chart,
    verify_composition_calculus,
)
from horseshoe.services.dimension import gibbs_measure, solve_dimension
from horseshoe.services.family import make_family
from horseshoe.services.fold import (
    check_parabolic_estimates,
    parabolic_compose,
    tangency_deviation,
    verify_parabolic_calculus,
)
from horseshoe.services.forest import ch_counterexamples, check_two_factor_formula
from horseshoe.services.params import check_H4, exponents, h4_region, resolve_intervals
from horseshoe.services.rclass import (
    RClass,
    build_class,
    check_relation_algebra,
    prime_decompose,
    regularity_test,
    stretched_exponential_constant,
)
from horseshoe.services.suites import cone_pairs, fold_instances, linear_fold_instance, linear_map

logger = logging.getLogger(__name__)
tracer = get_tracer(__name__)

LINEAR_PARABOLIC_RATIO = 0.5
LINEAR_TOLERANCE = 1e-6
TANGENCY_TOLERANCE = 0.05
STRETCHED_CEILING = 100.0
GIBBS_CEILING = 10.0
EIGENVECTOR_CEILING = 20.0
REGULARITY_BETA = 1.05


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: Dict[str, Any] = field(default_factory=dict)
    bound: Optional[float] = None
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        out = {"name": self.name, "passed": self.passed, "measured": self.measured, "bound": self.bound}
        if self.message:
            out["message"] = self.message
        return out


@dataclass
class SuiteReport:
    seed: int
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def get(self, name: str) -> Optional[CheckResult]:
        return next((c for c in self.checks if c.name == name), None)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "seed": self.seed, "checks": [c.to_dict() for c in self.checks]}


class SuiteContext:
    """Inputs shared by the checks; the class and its family are built once, on first use."""

    def __init__(self, config: RunConfig, corrupt: Optional[str] = None):
        self.config = config
        self.corrupt = corrupt
        self._pairs = None
        self._fam = None
        self._rc = None

    @property
    def pairs(self):
        if self._pairs is None:
            pairs = []
            for F, Fp in cone_pairs(self.config.seed, self.config.suite_size):
                pairs.append((F, Fp, simple_compose(F, Fp)))
            self._pairs = pairs
        return self._pairs

    @property
    def fam(self):
        if self._fam is None:
            self._fam = make_family(self.config.family)
        return self._fam

    @property
    def rclass(self) -> RClass:
        if self._rc is None:
            fam_cfg = self.config.family
            intervals = resolve_intervals(fam_cfg.eps0, fam_cfg.tau, self.config.interval_path, self.config.t)
            self._rc = build_class(self.fam, intervals, self.config.budgets)
        return self._rc


# Composition of affine-like maps

def check_composition_calculus(ctx: SuiteContext) -> CheckResult:
    worst, flagged = 0.0, []
    threshold = settings.calculus_flag_threshold
    for i, (F, Fp, Fpp) in enumerate(ctx.pairs):
        if i == 0 and ctx.corrupt is not None:
            Fpp = replace(Fpp, calculus=Fpp.calculus.corrupted(ctx.corrupt))
        report = verify_composition_calculus(F, Fp, Fpp, threshold)
        worst = max(worst, report.worst)
        flagged.extend(f"pair {i}: {name}" for name in report.flagged)
    message = "; ".join(flagged[:5])
    return CheckResult("composition_calculus", not flagged,
                       {"worst_relative_error": worst, "pairs": len(ctx.pairs), "flagged": len(flagged)},
                       threshold, message)


def check_cone_upgrade(ctx: SuiteContext) -> CheckResult:
    margins, failed = [], 0
    for F, _, Fpp in ctx.pairs:
        report = check_cone(Fpp, F.cone.squared())
        margins.append(report.margin)
        failed += not report.passed
    return CheckResult("cone_upgrade", failed == 0,
                       {"min_margin": min(margins), "failed": failed, "pairs": len(margins)}, 0.0)


def check_width_law(ctx: SuiteContext) -> CheckResult:
    ratios = [measured_composition_constants(F, Fp, Fpp)["width_ratio"] for F, Fp, Fpp in ctx.pairs]
    ceiling = settings.width_law_ceiling
    lo, hi = min(ratios), max(ratios)
    return CheckResult("width_law", 1.0 / ceiling <= lo and hi <= ceiling,
                       {"min_ratio": lo, "max_ratio": hi, "constant": max(hi, 1.0 / lo)}, ceiling)


def check_distortion_growth(ctx: SuiteContext) -> CheckResult:
    constants = [measured_composition_constants(F, Fp, Fpp)["distortion_constant"] for F, Fp, Fpp in ctx.pairs]
    ceiling = settings.distortion_ceiling
    worst = max(constants)
    return CheckResult("distortion_growth", worst <= ceiling, {"constant": worst}, ceiling)


def check_linear_width_law(ctx: SuiteContext) -> CheckResult:
    a, b, c = square_chart("l0"), square_chart("l1"), square_chart("l2")
    F, Fp = linear_map(a, b), linear_map(b, c)
    ratio = measured_composition_constants(F, Fp, simple_compose(F, Fp))["width_ratio"]
    return CheckResult("linear_width_law", abs(ratio - 1.0) <= 1e-10, {"ratio": ratio}, 1e-10)


# Parabolic composition

def check_linear_parabolic(ctx: SuiteContext) -> CheckResult:
    inst = linear_fold_instance()
    pair = parabolic_compose(inst.F0, inst.G, inst.F1)
    estimates = check_parabolic_estimates(pair, inst.F0, inst.F1)
    deviation = max(abs(r - LINEAR_PARABOLIC_RATIO) for name, r in estimates.ratios.items() if name.startswith("P"))
    return CheckResult("linear_parabolic_width", deviation <= LINEAR_TOLERANCE,
                       {"delta": pair.displacement.delta, "ratios": estimates.ratios,
                        "width_constant": estimates.width_constant}, LINEAR_TOLERANCE)


def check_parabolic_suite(ctx: SuiteContext) -> CheckResult:
    width = dist = tangency_w = tangency_ww = calculus = 0.0
    failures = []
    instances = fold_instances(ctx.config.seed, ctx.config.parabolic_suite_size)
    for i, inst in enumerate(instances):
        try:
            pair = parabolic_compose(inst.F0, inst.G, inst.F1)
        except HorseshoeError as e:
            failures.append(f"instance {i}: {type(e).__name__}")
            continue
        estimates = check_parabolic_estimates(pair, inst.F0, inst.F1)
        width = max(width, estimates.width_constant)
        dist = max(dist, estimates.distortion_constant)
        dw, dww = tangency_deviation(pair.functional)
        tangency_w, tangency_ww = max(tangency_w, dw), max(tangency_ww, dww)
        reports = verify_parabolic_calculus(pair)
        calculus = max([calculus] + [r.worst for r in reports.values()])
        if not estimates.passed:
            failures.append(f"instance {i}: {estimates.flagged}")
        if any(not r.passed for r in reports.values()):
            failures.append(f"instance {i}: calculus")
        if dw >= TANGENCY_TOLERANCE or dww >= TANGENCY_TOLERANCE:
            failures.append(f"instance {i}: tangency ({dw:.3g}, {dww:.3g})")
    return CheckResult("parabolic_suite", not failures,
                       {"width_constant": width, "distortion_constant": dist, "tangency_w": tangency_w,
                        "tangency_ww": tangency_ww, "calculus_worst": calculus, "instances": len(instances)},
                       settings.parabolic_ceiling, "; ".join(failures[:5]))


# Classes

def check_class_widths(ctx: SuiteContext) -> CheckResult:
    constant = stretched_exponential_constant(ctx.rclass)
    return CheckResult("stretched_exponential_widths", constant <= STRETCHED_CEILING,
                       {"constant": constant, "elements": len(ctx.rclass)}, STRETCHED_CEILING)


def check_class_cone_distortion(ctx: SuiteContext) -> CheckResult:
    rc = ctx.rclass
    cone = rc.fam.cone.widened()
    ceiling = 2.0 * rc.fam.distortion_bound()
    worst_margin, worst_distortion, failed = math.inf, 0.0, []
    for e in rc.ordered():
        if not e.word.factors:
            continue
        report = check_cone(e.map, cone, grid=17)
        D = distortion(e.map)
        worst_margin = min(worst_margin, report.margin)
        worst_distortion = max(worst_distortion, D)
        if not report.passed or D > ceiling:
            failed.append(e.key)
    return CheckResult("class_cone_distortion", not failed,
                       {"min_margin": worst_margin, "max_distortion": worst_distortion, "failed": len(failed)},
                       ceiling, "; ".join(failed[:5]))


def check_prime_decomposition(ctx: SuiteContext) -> CheckResult:
    rc = ctx.rclass
    bad = []
    for e in rc.ordered():
        if not e.word.factors:
            continue
        primes = prime_decompose(rc, e)
        joined = primes[0].word
        for p in primes[1:]:
            joined = joined.join(p.word)
        if joined.key != e.key:
            bad.append(e.key)
    return CheckResult("prime_decomposition", not bad, {"elements": len(rc), "mismatches": len(bad)},
                       message="; ".join(bad[:5]))


def check_relation_algebra_suite(ctx: SuiteContext) -> CheckResult:
    report = check_relation_algebra(ctx.rclass)
    return CheckResult("relation_algebra", report.passed,
                       {"quadruples": report.quadruples, "heredity": len(report.heredity_violations),
                        "concavity": len(report.concavity_violations)})


def check_regularity(ctx: SuiteContext) -> CheckResult:
    report = regularity_test(ctx.rclass, REGULARITY_BETA)
    return CheckResult("regularity", report.regular,
                       {"bicritical": report.bicritical, "undetermined": report.undetermined,
                        "witness": report.witness}, report.bound)


def check_coding(ctx: SuiteContext) -> CheckResult:
    result = ctx.fam.coding_consistency()
    return CheckResult("coding_consistency", result["mismatches"] == 0, result)


# Forests, exponents, dimension

def check_forests(ctx: SuiteContext) -> CheckResult:
    mismatches = check_two_factor_formula(trials=200, seed=ctx.config.seed)
    report = ch_counterexamples()
    passed = (mismatches == 0 and not report.recipe_sufficient and report.disjoint_down_sets
              and report.envelope_is_union)
    return CheckResult("forest_envelopes", passed,
                       {"two_factor_mismatches": mismatches, "three_factor_recipe_fails": not report.recipe_sufficient,
                        "envelope_is_union": report.envelope_is_union})


def check_exponents(ctx: SuiteContext) -> CheckResult:
    exps = exponents(0.55, 0.55)
    identity = abs((exps.sigma0 + exps.sigma1) / exps.rho1 - exps.beta_max)
    rows = h4_region(n=20)
    disagreements = sum(1 for r in rows if r["beta_max"] is not None and r["h4"] != (r["beta_max"] > 1.0))
    reference = check_H4(0.55, 0.55) == (exps.beta_max > 1.0)
    return CheckResult("exponent_identities", identity <= 1e-12 and disagreements == 0 and reference,
                       {"identity_error": identity, "h4_disagreements": disagreements}, 1e-12)


def check_gibbs(ctx: SuiteContext) -> CheckResult:
    result = solve_dimension(ctx.rclass, ctx.config.truncation)
    table = gibbs_measure(ctx.rclass, result.d_s, ctx.config.truncation)
    passed = (table.gibbs_constant <= GIBBS_CEILING and result.monotone
              and result.eigenvector_ratio <= EIGENVECTOR_CEILING and table.additivity_error <= 1e-12
              and table.jacobian_error <= 1e-6)
    return CheckResult("gibbs_constant", passed,
                       {"d_s": result.d_s, "gibbs_constant": table.gibbs_constant,
                        "eigenvector_ratio": result.eigenvector_ratio, "additivity_error": table.additivity_error,
                        "jacobian_error": table.jacobian_error, "tail_mass": result.tail_mass}, GIBBS_CEILING)


CHECKS: Dict[str, Callable[[SuiteContext], CheckResult]] = {
    "composition_calculus": check_composition_calculus,
    "cone_upgrade": check_cone_upgrade,
    "width_law": check_width_law,
    "distortion_growth": check_distortion_growth,
    "linear_width_law": check_linear_width_law,
    "linear_parabolic_width": check_linear_parabolic,
    "parabolic_suite": check_parabolic_suite,
    "coding_consistency": check_coding,
    "stretched_exponential_widths": check_class_widths,
    "class_cone_distortion": check_class_cone_distortion,
    "prime_decomposition": check_prime_decomposition,
    "relation_algebra": check_relation_algebra_suite,
    "regularity": check_regularity,
    "forest_envelopes": check_forests,
    "exponent_identities": check_exponents,
    "gibbs_constant": check_gibbs,
}


def run_suite(config: RunConfig, only: Optional[Sequence[str]] = None,
              corrupt: Optional[str] = None) -> SuiteReport:
    """
    Run the verification checks.

    Args:
        config: Run configuration (seed and suite sizes drive the randomized checks)
        only: Subset of check names (default: all, in registry order)
        corrupt: Composition-calculus formula to perturb, e.g. "A_y"

    Returns:
        SuiteReport; a check that raises is reported as failed with the error
    """
    names = list(CHECKS) if only is None else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ValueError(f"unknown checks: {unknown}")
    ctx = SuiteContext(config, corrupt)
    results = []
    with tracer.start_as_current_span("verification_suite") as span:
        span.set_attribute("suite.seed", config.seed)
        for name in names:
            start = time.perf_counter()
            try:
                result = CHECKS[name](ctx)
            except HorseshoeError as e:
                mark_error(span, e)
                result = CheckResult(name, False, {}, message=f"{type(e).__name__}: {e}")
            status = "passed" if result.passed else "FAILED"
            logger.info(f"check {name}: {status} ({time.perf_counter() - start:.2f}s)")
            results.append(result)
    report = SuiteReport(config.seed, results)
    if not report.passed:
        logger.warning(f"verification failures: {report.failures}")
    return report
