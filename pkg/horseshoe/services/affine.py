"""
Affine-Like Maps

Implicitly represented affine-like maps F: P -> Q between chart rectangles,
x0 = A(y0, x1), y1 = B(y0, x1), with their strips, widths, cone and
distortion diagnostics, and simple composition with the analytic
second-order derivative calculus used to verify it.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from horseshoe.core.config import settings
from horseshoe.core.exceptions import (
    ChartMismatch,
    DeltaDegenerate,
    EmptyIntersection,
    NonConvergence,
    ProjectionNotInvertible,
    VanishingDerivative,
)
from horseshoe.observability.metrics import metrics
from horseshoe.services.fields import (
    Field1,
    Rect,
    ScalarField2,
    fit_field,
    fit_function,
    inf_abs,
    node_grid,
    sup_norm,
)
from horseshoe.services.newton import newton_2x2, newton_scalar

logger = logging.getLogger(__name__)

CALCULUS_FORMULAS = (
    "A_x", "B_y", "A_y", "B_x",
    "dx_log_A_x", "dy_log_A_x", "dy_log_B_y", "dx_log_B_y",
    "A_yy", "B_xx",
)


@dataclass(frozen=True)
class Chart:
    """A named chart rectangle; y is the unstable-side coordinate of the rectangle rows."""
    name: str
    rect: Rect

    @property
    def y_range(self) -> Tuple[float, float]:
        return self.rect.y_lo, self.rect.y_hi

    @property
    def x_range(self) -> Tuple[float, float]:
        return self.rect.x_lo, self.rect.x_hi

    def reflected(self) -> "Chart":
        """Chart with the roles of x and y exchanged (time reversal)."""
        name = self.name[:-1] if self.name.endswith("~") else self.name + "~"
        return Chart(name, self.rect.transposed())


def square_chart(name: str, lo: float = -1.0, hi: float = 1.0) -> Chart:
    return Chart(name, Rect(lo, hi, lo, hi))


class ConeParams(BaseModel):
    """Expansion floor lam and cone apertures u, v with 1 <= u*v <= lam**2."""
    model_config = ConfigDict(frozen=True)

    lam: float = Field(..., gt=0.0)
    u: float = Field(..., gt=0.0)
    v: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _apertures(self) -> "ConeParams":
        if not (1.0 <= self.u * self.v <= self.lam ** 2):
            raise ValueError(f"cone parameters need 1 <= u*v <= lam^2, got {self}")
        return self

    def squared(self) -> "ConeParams":
        return ConeParams(lam=self.lam ** 2, u=self.u, v=self.v)

    def widened(self) -> "ConeParams":
        """Same expansion, apertures replaced by their square roots."""
        return ConeParams(lam=self.lam, u=self.u ** 0.5, v=self.v ** 0.5)


@dataclass(frozen=True)
class Strip:
    """
    Vertical strip {lower(y) <= x <= upper(y)} or horizontal strip
    {lower(x) <= y <= upper(x)} of a chart.
    """
    orientation: str
    chart: Chart
    lower: Field1
    upper: Field1

    @cached_property
    def width(self) -> float:
        v, lo = self.lower.sample()
        _, hi = self.upper.sample()
        return float(np.max(hi - lo))

    def is_ordered(self) -> bool:
        _, lo = self.lower.sample()
        _, hi = self.upper.sample()
        return bool(np.all(lo < hi))

    def max_slope(self) -> float:
        _, a = self.lower.derivative().sample()
        _, b = self.upper.derivative().sample()
        return float(max(np.max(np.abs(a)), np.max(np.abs(b))))

    def center(self, v):
        return 0.5 * (self.lower(v) + self.upper(v))

    def contains(self, other: "Strip", tol: float = 1e-9) -> bool:
        if other.chart.name != self.chart.name or other.orientation != self.orientation:
            return False
        v, lo = other.lower.sample()
        _, hi = other.upper.sample()
        return bool(np.all(self.lower(v) <= lo + tol) and np.all(hi <= self.upper(v) + tol))

    def disjoint(self, other: "Strip", tol: float = 1e-12) -> bool:
        if other.chart.name != self.chart.name:
            return True
        v, lo = other.lower.sample()
        _, hi = other.upper.sample()
        return bool(np.all(hi < self.lower(v) - tol) or np.all(lo > self.upper(v) + tol))


@dataclass(frozen=True)
class CalculusRecord:
    """Analytic first/second-order values of a composite at interior check points."""
    ys: np.ndarray
    xs: np.ndarray
    values: Dict[str, np.ndarray]

    def corrupted(self, name: str, delta: float = 1e-3) -> "CalculusRecord":
        values = dict(self.values)
        values[name] = values[name] + delta
        return CalculusRecord(self.ys, self.xs, values)


@dataclass(frozen=True, eq=False)
class ImplicitMap:
    """
    Affine-like map given by its implicit representation.

    A and B live on source.y x target.x. The domain is a vertical strip of
    the source chart, the image a horizontal strip of the target chart.
    """
    A: ScalarField2
    B: ScalarField2
    source: Chart
    target: Chart
    cone: Optional[ConeParams] = None
    calculus: Optional[CalculusRecord] = None

    def __post_init__(self):
        expected = Rect(self.source.rect.y_lo, self.source.rect.y_hi,
                        self.target.rect.x_lo, self.target.rect.x_hi)
        if self.A.domain != expected or self.B.domain != expected:
            raise ValueError(f"fields must live on {expected}, got {self.A.domain} / {self.B.domain}")
        floor = settings.derivative_floor
        for name, f in (("A_x", self.A.derivative(0, 1)), ("B_y", self.B.derivative(1, 0))):
            Y, X = node_grid(expected, (max(self.A.degrees[0], 4), max(self.A.degrees[1], 4)))
            vals = f(Y, X)
            if np.min(np.abs(vals)) < floor or not (np.all(vals > 0) or np.all(vals < 0)):
                raise VanishingDerivative(f"{name} is not sign-definite on the definition rectangle",
                                          minimum=float(np.min(np.abs(vals))))

    @property
    def rect(self) -> Rect:
        return self.A.domain

    @property
    def degrees(self) -> Tuple[int, int]:
        return (max(self.A.degrees[0], self.B.degrees[0]), max(self.A.degrees[1], self.B.degrees[1]))

    @property
    def is_affine(self) -> bool:
        return self.A.is_affine and self.B.is_affine

    @cached_property
    def signs(self) -> Tuple[float, float]:
        r = self.rect
        yc, xc = 0.5 * (r.y_lo + r.y_hi), 0.5 * (r.x_lo + r.x_hi)
        return (float(np.sign(self.A.derivative(0, 1)(yc, xc))),
                float(np.sign(self.B.derivative(1, 0)(yc, xc))))

    @cached_property
    def domain(self) -> Strip:
        r = self.rect
        a = self.A.restrict_x(r.x_lo)
        b = self.A.restrict_x(r.x_hi)
        lo, hi = (a, b) if self.signs[0] > 0 else (b, a)
        return Strip("vertical", self.source, lo, hi)

    @cached_property
    def image(self) -> Strip:
        r = self.rect
        a = self.B.restrict_y(r.y_lo)
        b = self.B.restrict_y(r.y_hi)
        lo, hi = (a, b) if self.signs[1] > 0 else (b, a)
        return Strip("horizontal", self.target, lo, hi)

    @cached_property
    def _widths(self) -> Tuple[float, float]:
        return sup_norm(self.A.derivative(0, 1))[0], sup_norm(self.B.derivative(1, 0))[0]

    def widths(self) -> Tuple[float, float]:
        """(|P|, |Q|) = (max |A_x|, max |B_y|)."""
        return self._widths

    def solve_x1(self, x0, y0) -> np.ndarray:
        """x1 with A(y0, x1) = x0."""
        x0 = np.asarray(x0, dtype=float)
        y0 = np.broadcast_to(np.asarray(y0, dtype=float), x0.shape).ravel()
        target = x0.ravel()
        A_x = self.A.derivative(0, 1)
        r = self.rect
        guess = np.full(target.shape, 0.5 * (r.x_lo + r.x_hi))

        def fun(x1, idx):
            return self.A(y0[idx], x1) - target[idx], A_x(y0[idx], x1)

        x1, _ = newton_scalar(fun, guess)
        return x1.reshape(x0.shape)

    def forward(self, x0, y0) -> Tuple[np.ndarray, np.ndarray]:
        """Explicit evaluation (x0, y0) -> (x1, y1)."""
        x1 = self.solve_x1(x0, y0)
        return x1, self.B(y0, x1)

    def jacobian(self, x0, y0) -> np.ndarray:
        """DF at (x0, y0) as an array [..., 2, 2]."""
        x1 = self.solve_x1(x0, y0)
        A = self.A.jet(y0, x1)
        B = self.B.jet(y0, x1)
        inv = 1.0 / A["f_x"]
        J = np.empty(np.shape(x1) + (2, 2))
        J[..., 0, 0] = inv
        J[..., 0, 1] = -A["f_y"] * inv
        J[..., 1, 0] = B["f_x"] * inv
        J[..., 1, 1] = (A["f_x"] * B["f_y"] - A["f_y"] * B["f_x"]) * inv
        return J

    def determinant(self, x0, y0):
        """A_x^-1 B_y at the point."""
        x1 = self.solve_x1(x0, y0)
        return self.B.derivative(1, 0)(y0, x1) / self.A.derivative(0, 1)(y0, x1)

    def inverse(self) -> "ImplicitMap":
        """Implicit representation of the inverse in reflected charts."""
        return ImplicitMap(self.B.transpose(), self.A.transpose(),
                           self.target.reflected(), self.source.reflected(), self.cone)

    @classmethod
    def identity(cls, chart: Chart) -> "ImplicitMap":
        """Neutral element A = x1, B = y0 on a chart."""
        r = chart.rect
        A = fit_function(lambda y, x: x, r, (1, 1), keep_closed_form=False, check_degree=False)
        B = fit_function(lambda y, x: y, r, (1, 1), keep_closed_form=False, check_degree=False)
        return cls(A, B, chart, chart)

    @classmethod
    def from_functions(
        cls,
        a: Callable,
        b: Callable,
        source: Chart,
        target: Chart,
        degrees: Tuple[int, int] = None,
        cone: Optional[ConeParams] = None,
    ) -> "ImplicitMap":
        """Fit A and B from vectorized callables a(y0, x1), b(y0, x1)."""
        degrees = degrees or (settings.field_degree, settings.field_degree)
        rect = Rect(source.rect.y_lo, source.rect.y_hi, target.rect.x_lo, target.rect.x_hi)
        return cls(fit_function(a, rect, degrees), fit_function(b, rect, degrees), source, target, cone)


def widths(F: ImplicitMap) -> Tuple[float, float]:
    """(|P|, |Q|) of an affine-like map."""
    return F.widths()


@dataclass
class ConeReport:
    passed: bool
    margin: float
    worst_node: Tuple[float, float]
    worst_inequality: str


def check_cone(F: ImplicitMap, c: ConeParams, grid: int = None) -> ConeReport:
    """
    Check lam|A_x| + u|A_y| <= 1 and lam|B_y| + v|B_x| <= 1 on a sampling grid.

    Args:
        F: Map to check
        c: Cone parameters
        grid: Sampling points per axis (defaults to settings.sup_grid)

    Returns:
        ConeReport with margin 1 - max(left sides) and the worst node
    """
    n = grid or settings.sup_grid
    r = F.rect
    ys = np.linspace(r.y_lo, r.y_hi, n)
    xs = np.linspace(r.x_lo, r.x_hi, n)
    lhs_a = c.lam * np.abs(F.A.derivative(0, 1).grid(ys, xs)) + c.u * np.abs(F.A.derivative(1, 0).grid(ys, xs))
    lhs_b = c.lam * np.abs(F.B.derivative(1, 0).grid(ys, xs)) + c.v * np.abs(F.B.derivative(0, 1).grid(ys, xs))
    which, lhs = ("A", lhs_a) if lhs_a.max() >= lhs_b.max() else ("B", lhs_b)
    i, j = np.unravel_index(int(np.argmax(lhs)), lhs.shape)
    margin = 1.0 - float(lhs[i, j])
    passed = margin >= -1e-12
    if not passed:
        logger.debug(f"cone check failed at ({ys[i]:.4f}, {xs[j]:.4f}) on {which}: margin {margin:.3e}")
    return ConeReport(passed, margin, (float(ys[i]), float(xs[j])), which)


def distortion_terms(F: ImplicitMap) -> Dict[str, Callable]:
    """The six functions whose sup defines the distortion."""
    A, B = F.A, F.B
    A_x, B_y = A.derivative(0, 1), B.derivative(1, 0)
    return {
        "dx_log_A_x": lambda y, x: A.derivative(0, 2)(y, x) / A_x(y, x),
        "dy_log_A_x": lambda y, x: A.derivative(1, 1)(y, x) / A_x(y, x),
        "A_yy": A.derivative(2, 0),
        "dy_log_B_y": lambda y, x: B.derivative(2, 0)(y, x) / B_y(y, x),
        "dx_log_B_y": lambda y, x: B.derivative(1, 1)(y, x) / B_y(y, x),
        "B_xx": B.derivative(0, 2),
    }


def distortion(F: ImplicitMap) -> float:
    """
    D(F): max over the rectangle of the six distortion functions.

    Raises:
        VanishingDerivative: if |A_x| or |B_y| drops below derivative_floor
    """
    for name, f in (("A_x", F.A.derivative(0, 1)), ("B_y", F.B.derivative(1, 0))):
        low = inf_abs(f)
        if low < settings.derivative_floor:
            raise VanishingDerivative(f"|{name}| = {low:.3e} below derivative floor", minimum=low)
    return max(sup_norm(term, F.rect)[0] for term in distortion_terms(F).values())


def from_diffeo(
    phi: Callable,
    dphi_dx: Callable,
    domain: Strip,
    target: Chart,
    degrees: Tuple[int, int] = None,
) -> ImplicitMap:
    """
    Implicit representation of an explicit diffeomorphism restricted to a vertical strip.

    Args:
        phi: phi(x0, y0) -> (x1, y1), vectorized
        dphi_dx: d x1 / d x0 at (x0, y0), vectorized
        domain: Vertical strip of the source chart
        target: Target chart
        degrees: Field degrees (default settings.field_degree per axis)

    Returns:
        ImplicitMap with phi(A(y0, x1), y0) = (x1, B(y0, x1)) at the nodes

    Raises:
        ProjectionNotInvertible: if the graph does not project onto (y0, x1)
    """
    degrees = degrees or (settings.field_degree, settings.field_degree)
    source = domain.chart
    rect = Rect(source.rect.y_lo, source.rect.y_hi, target.rect.x_lo, target.rect.x_hi)
    Y0, X1 = node_grid(rect, degrees)
    y0, x1 = Y0.ravel(), X1.ravel()

    def fun(x0, idx):
        return phi(x0, y0[idx])[0] - x1[idx], dphi_dx(x0, y0[idx])

    x0, _ = newton_scalar(fun, domain.center(y0), error=ProjectionNotInvertible)
    slope = dphi_dx(x0, y0)
    if not (np.all(slope > 0) or np.all(slope < 0)):
        raise ProjectionNotInvertible("x-derivative changes sign on the strip (fold)")
    inside = (x0 >= domain.lower(y0) - 1e-8) & (x0 <= domain.upper(y0) + 1e-8)
    if not inside.all():
        raise ProjectionNotInvertible(f"{int((~inside).sum())} nodes leave the domain strip")
    y1 = phi(x0, y0)[1]
    A = fit_field(x0.reshape(Y0.shape), degrees, rect, check_degree=False)
    B = fit_field(np.asarray(y1).reshape(Y0.shape), degrees, rect, check_degree=False)
    return ImplicitMap(A, B, source, target)


def _eliminate(F: ImplicitMap, Fp: ImplicitMap, y0: np.ndarray, x2: np.ndarray):
    """Solve x1 = A'(y1, x2), y1 = B(y0, x1) pointwise."""
    A_p, B = Fp.A, F.B
    A_p_y, B_x = A_p.derivative(1, 0), B.derivative(0, 1)
    y_mid = 0.5 * sum(Fp.source.y_range)
    x1 = A_p(np.full(y0.shape, y_mid), x2)
    y1 = B(y0, x1)
    for _ in range(3):
        x1 = A_p(y1, x2)
        y1 = B(y0, x1)

    def fun(u, v, idx):
        return (
            u - A_p(v, x2[idx]),
            v - B(y0[idx], u),
            np.ones_like(u),
            -A_p_y(v, x2[idx]),
            -B_x(y0[idx], u),
            np.ones_like(u),
        )

    x1, y1, _ = newton_2x2(fun, x1, y1)
    delta = 1.0 - A_p_y(y1, x2) * B_x(y0, x1)
    if np.min(np.abs(delta)) < settings.delta_floor:
        raise DeltaDegenerate(f"|1 - A'_y B_x| = {np.min(np.abs(delta)):.3e}",
                              minimum=float(np.min(np.abs(delta))))
    tol = 1e-9
    xr, yr = F.target.x_range, Fp.source.y_range
    if (np.any(x1 < xr[0] - tol) or np.any(x1 > xr[1] + tol)
            or np.any(y1 < yr[0] - tol) or np.any(y1 > yr[1] + tol)):
        raise EmptyIntersection("intermediate points leave the middle chart")
    return x1, y1, delta


def composition_calculus(F: ImplicitMap, Fp: ImplicitMap, y0: np.ndarray, x2: np.ndarray) -> Dict[str, np.ndarray]:
    """
    First and second-order data of the composite at (y0, x2) from the
    operands' jets alone.
    """
    x1, y1, delta = _eliminate(F, Fp, y0, x2)
    a = F.A.jet(y0, x1)
    b = F.B.jet(y0, x1)
    ap = Fp.A.jet(y1, x2)
    bp = Fp.B.jet(y1, x2)

    # intermediate-point derivatives
    X_x = ap["f_x"] / delta
    X_y = ap["f_y"] * b["f_y"] / delta
    Y_x = ap["f_x"] * b["f_x"] / delta
    Y_y = b["f_y"] / delta

    d_x = -(b["f_xx"] * X_x * ap["f_y"] + b["f_x"] * ap["f_xy"] + b["f_x"] * ap["f_yy"] * Y_x)
    d_y = -(ap["f_yy"] * Y_y * b["f_x"] + ap["f_y"] * (b["f_xy"] + b["f_xx"] * X_y))

    X_yy = (ap["f_yy"] * Y_y ** 2
            + ap["f_y"] * (b["f_yy"] + 2 * b["f_xy"] * X_y + b["f_xx"] * X_y ** 2)) / delta
    Y_xx = (b["f_xx"] * X_x ** 2
            + b["f_x"] * (ap["f_xx"] + 2 * ap["f_xy"] * Y_x + ap["f_yy"] * Y_x ** 2)) / delta

    return {
        "A_x": a["f_x"] * X_x,
        "B_y": bp["f_y"] * Y_y,
        "A_y": a["f_y"] + a["f_x"] * X_y,
        "B_x": bp["f_x"] + bp["f_y"] * Y_x,
        "dx_log_A_x": (a["f_xx"] / a["f_x"]) * X_x + (ap["f_xx"] + ap["f_xy"] * Y_x) / ap["f_x"] - d_x / delta,
        "dy_log_A_x": (a["f_xy"] + a["f_xx"] * X_y) / a["f_x"] + ap["f_xy"] * Y_y / ap["f_x"] - d_y / delta,
        "dy_log_B_y": (b["f_yy"] + b["f_xy"] * X_y) / b["f_y"] + bp["f_yy"] * Y_y / bp["f_y"] - d_y / delta,
        "dx_log_B_y": b["f_xy"] * X_x / b["f_y"] + (bp["f_xy"] + bp["f_yy"] * Y_x) / bp["f_y"] - d_x / delta,
        "A_yy": a["f_yy"] + 2 * a["f_xy"] * X_y + a["f_xx"] * X_y ** 2 + a["f_x"] * X_yy,
        "B_xx": bp["f_xx"] + 2 * bp["f_xy"] * Y_x + bp["f_yy"] * Y_x ** 2 + bp["f_y"] * Y_xx,
    }


def numeric_calculus(G: ImplicitMap, y: np.ndarray, x: np.ndarray) -> Dict[str, np.ndarray]:
    """The same ten quantities read off G's own fields by spectral differentiation."""
    a = G.A.jet(y, x)
    b = G.B.jet(y, x)
    return {
        "A_x": a["f_x"],
        "B_y": b["f_y"],
        "A_y": a["f_y"],
        "B_x": b["f_x"],
        "dx_log_A_x": a["f_xx"] / a["f_x"],
        "dy_log_A_x": a["f_xy"] / a["f_x"],
        "dy_log_B_y": b["f_yy"] / b["f_y"],
        "dx_log_B_y": b["f_xy"] / b["f_y"],
        "A_yy": a["f_yy"],
        "B_xx": b["f_xx"],
    }


def _composite_degrees(F: ImplicitMap, Fp: ImplicitMap) -> Tuple[int, int]:
    if F.is_affine and Fp.is_affine:
        return 1, 1
    dy = max(F.degrees[0], Fp.degrees[0], settings.field_degree)
    dx = max(F.degrees[1], Fp.degrees[1], settings.field_degree)
    return dy, dx


def simple_compose(
    F: ImplicitMap,
    Fp: ImplicitMap,
    degrees: Optional[Tuple[int, int]] = None,
    with_calculus: bool = True,
) -> ImplicitMap:
    """
    Simple composition F'' = F' o F.

    Args:
        F: First map (source chart -> middle chart)
        Fp: Second map (middle chart -> target chart)
        degrees: Composite field degrees; affine operands give an affine composite
        with_calculus: Store analytic derivative values at interior check points

    Returns:
        The composite ImplicitMap

    Raises:
        ChartMismatch: if F's target chart is not F''s source chart
        DeltaDegenerate: if 1 - A'_y B_x nearly vanishes
        EmptyIntersection: if the strips do not compose inside the middle chart
    """
    if F.target.name != Fp.source.name:
        raise ChartMismatch(f"cannot compose {F.target.name} -> {Fp.source.name}")
    start = time.perf_counter()
    try:
        degrees = degrees or _composite_degrees(F, Fp)
        rect = Rect(F.source.rect.y_lo, F.source.rect.y_hi, Fp.target.rect.x_lo, Fp.target.rect.x_hi)
        Y0, X2 = node_grid(rect, degrees)
        x1, y1, _ = _eliminate(F, Fp, Y0.ravel(), X2.ravel())
        A = fit_field(F.A(Y0.ravel(), x1).reshape(Y0.shape), degrees, rect, check_degree=False)
        B = fit_field(Fp.B(y1, X2.ravel()).reshape(Y0.shape), degrees, rect, check_degree=False)
        calculus = None
        if with_calculus:
            ys, xs = rect.interior_points()
            calculus = CalculusRecord(ys, xs, composition_calculus(F, Fp, ys, xs))
        cone = F.cone.squared() if F.cone is not None and F.cone == Fp.cone else None
        result = ImplicitMap(A, B, F.source, Fp.target, cone, calculus)
    except Exception as e:
        metrics.record_composition("simple", type(e).__name__, time.perf_counter() - start)
        raise
    metrics.record_composition("simple", "ok", time.perf_counter() - start)
    return result


@dataclass
class CalculusReport:
    """Per-formula discrepancies between analytic and numerical derivatives."""
    discrepancies: Dict[str, float]
    threshold: float
    flagged: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def worst(self) -> float:
        return max(self.discrepancies.values()) if self.discrepancies else 0.0


def compare_calculus(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray],
                     threshold: float = None) -> CalculusReport:
    threshold = settings.calculus_flag_threshold if threshold is None else threshold
    discrepancies = {}
    for name in analytic:
        a = np.asarray(analytic[name])
        n = np.asarray(numeric[name])
        scale = max(float(np.max(np.abs(a))), 1e-3)
        discrepancies[name] = float(np.max(np.abs(a - n))) / scale
    flagged = [name for name, d in discrepancies.items() if d > threshold]
    return CalculusReport(discrepancies, threshold, flagged)


def verify_composition_calculus(F: ImplicitMap, Fp: ImplicitMap, Fpp: ImplicitMap,
                                threshold: float = None) -> CalculusReport:
    """
    Compare the analytic composition calculus with derivatives of the refit composite.

    Args:
        F, Fp: Operands
        Fpp: simple_compose(F, Fp), possibly carrying a stored CalculusRecord
        threshold: Flag level (defaults to settings.calculus_flag_threshold)

    Returns:
        CalculusReport listing every formula above the threshold
    """
    record = Fpp.calculus
    if record is None:
        ys, xs = Fpp.rect.interior_points()
        record = CalculusRecord(ys, xs, composition_calculus(F, Fp, ys, xs))
    report = compare_calculus(record.values, numeric_calculus(Fpp, record.ys, record.xs), threshold)
    if report.flagged:
        logger.warning(f"composition calculus discrepancies above {report.threshold}: {report.flagged}")
    return report


def measured_composition_constants(F: ImplicitMap, Fp: ImplicitMap, Fpp: ImplicitMap) -> Dict[str, float]:
    """
    Measured constants of the width law and of distortion growth.

    Returns:
        Dict with width_ratio |P''|/(|P||P'|) and distortion_constant, the
        smallest C with D'' <= max(D + C|Q|(D + D'), D' + C|P'|(D + D'))
    """
    P, Q = F.widths()
    Pp, Qp = Fp.widths()
    Ppp, _ = Fpp.widths()
    D, Dp, Dpp = distortion(F), distortion(Fp), distortion(Fpp)
    total = D + Dp
    if total <= 0.0 or Dpp <= max(D, Dp):
        constant = 0.0
    else:
        constant = max(0.0, min((Dpp - D) / (Q * total), (Dpp - Dp) / (Pp * total)))
    return {"width_ratio": Ppp / (P * Pp), "distortion_constant": constant,
            "distortion": Dpp, "distortion_first": D, "distortion_second": Dp}
