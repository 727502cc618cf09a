"""
Randomized Suites

Seeded generators of cone-satisfying affine-like map pairs and of perturbed
fold instances. All randomness of a run goes through one numpy Generator
built from the run seed.
"""

import logging
from dataclasses import dataclass
from typing import Iterator, List, Tuple

import numpy as np

from horseshoe.services.affine import Chart, ConeParams, ImplicitMap, square_chart
from horseshoe.services.fold import FoldGeometry, FoldMap, make_model_fold

logger = logging.getLogger(__name__)

SUITE_CONE = ConeParams(lam=2.0, u=1.5, v=1.5)


@dataclass(frozen=True)
class QuadraticCoefficients:
    """f(y, x) = c + a*main + p*other + q*other**2 + r*x*y + s*main**2."""
    c: float
    a: float
    p: float
    q: float
    r: float
    s: float

    @classmethod
    def draw(cls, rng: np.random.Generator, offset: float, slope: Tuple[float, float],
             amplitude: float) -> "QuadraticCoefficients":
        return cls(
            c=float(rng.uniform(-offset, offset)),
            a=float(rng.uniform(*slope)),
            p=float(rng.uniform(-amplitude, amplitude)),
            q=float(rng.uniform(-amplitude, amplitude)),
            r=float(rng.uniform(-amplitude, amplitude)),
            s=float(rng.uniform(-amplitude, amplitude)),
        )


def random_map(
    rng: np.random.Generator,
    source: Chart,
    target: Chart,
    amplitude: float = 0.01,
    offset: float = 0.5,
    slope: Tuple[float, float] = (0.15, 0.3),
    cone: ConeParams = SUITE_CONE,
) -> ImplicitMap:
    """
    A quadratic affine-like map between [-1, 1]^2 charts.

    A = c + a x1 + p y0 + q y0^2 + r x1 y0 + s x1^2, and B with the roles of
    x1 and y0 exchanged; the bounds keep both strips inside their charts and
    the map inside the suite cone.
    """
    ca = QuadraticCoefficients.draw(rng, offset, slope, amplitude)
    cb = QuadraticCoefficients.draw(rng, offset, slope, amplitude)

    def A(y, x):
        return ca.c + ca.a * x + ca.p * y + ca.q * y ** 2 + ca.r * x * y + ca.s * x ** 2

    def B(y, x):
        return cb.c + cb.a * y + cb.p * x + cb.q * x ** 2 + cb.r * x * y + cb.s * y ** 2

    return ImplicitMap.from_functions(A, B, source, target, cone=cone)


def linear_map(source: Chart, target: Chart, lam_s: float = 0.3) -> ImplicitMap:
    """A = lam_s x1, B = lam_s y0."""
    return ImplicitMap.from_functions(
        lambda y, x: lam_s * x, lambda y, x: lam_s * y, source, target, degrees=(1, 1)
    )


def cone_pairs(seed: int, size: int, amplitude: float = 0.01) -> Iterator[Tuple[ImplicitMap, ImplicitMap]]:
    """Composable pairs F: c0 -> c1, F': c1 -> c2 drawn from one seeded generator."""
    rng = np.random.default_rng(seed)
    charts = [square_chart(f"c{i}") for i in range(3)]
    for _ in range(size):
        yield (random_map(rng, charts[0], charts[1], amplitude),
               random_map(rng, charts[1], charts[2], amplitude))


@dataclass
class FoldInstance:
    F0: ImplicitMap
    G: FoldMap
    F1: ImplicitMap


def linear_fold_instance(t: float = 1.0, lam_s: float = 0.3) -> FoldInstance:
    """F0, F1 linear on [-1, 1]^2 and the model fold with x_c = y_c = 0, kappa = 0."""
    G = make_model_fold(FoldGeometry(), t)
    F0 = linear_map(square_chart("a0"), G.source, lam_s)
    F1 = linear_map(G.target, square_chart("a1"), lam_s)
    return FoldInstance(F0, G, F1)


def fold_instances(seed: int, size: int, amplitude: float = 0.005,
                   chi: str = "identity") -> List[FoldInstance]:
    """
    Perturbed fold instances around the linear model.

    F0 and F1 get small quadratic terms, the fold small slopes kappa; t is
    drawn so that the corner displacement stays comfortably positive.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        geometry = FoldGeometry(
            kappa_u=float(rng.uniform(-0.05, 0.05)),
            kappa_s=float(rng.uniform(-0.05, 0.05)),
            chi=chi,
        )
        G = make_model_fold(geometry, float(rng.uniform(0.8, 0.95)))
        F0 = random_map(rng, square_chart("a0"), G.source, amplitude, offset=0.0, slope=(0.15, 0.2))
        F1 = random_map(rng, G.target, square_chart("a1"), amplitude, offset=0.0, slope=(0.15, 0.2))
        out.append(FoldInstance(F0, G, F1))
    return out
